"""Three-level latent DDPM with conditional flow between levels.

Level ``i``'s denoiser predicts the noise in ``z^i_t`` from

    h = InProj(z^i_t) + UpProj(z^{lower}_t · W^i) + c_emb + time_emb(t) + pos

where ``lower`` is the nearest active level below ``i`` (zero for the atom
level or when every lower level has been ablated). During training the
lower latent is the ground truth diffused with the lower level's own noise
(teacher forcing), so the levels never exchange gradients and can be fitted
in parallel threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data_io.checkpoint import load_checkpoint, save_checkpoint
from .errors import (BadTimestep, CannotRemoveSequenceLevel, ConfigError, LevelMismatch,
                     MissingCheckpoint, MissingLevelData, ShapeMismatch)
from .nn import tensor as T
from .nn.layers import (MLP, AdaLNBlock, LayerNorm, Linear, Module, TransformerBlock,
                        sinusoidal_embedding)
from .nn.optim import Adam, clip_by_global_norm
from .nn.tensor import Parameter, Tape
from .vae import AMINO_ACID, ATOM, BACKBONE, LEVEL_NAMES, LatentSeq, check_level

ALL_LEVELS = (ATOM, BACKBONE, AMINO_ACID)
MAX_LENGTHS = (64, 128, 256, 512)
LEVEL_ALIASES = {"atom": ATOM, "all-atom": ATOM, "backbone": BACKBONE, "amino_acid": AMINO_ACID,
                 "sequence": AMINO_ACID, 1: ATOM, 2: BACKBONE, 3: AMINO_ACID}


# ---------------------------------------------------------------------------
# schedule and forward process


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray

    def __post_init__(self):
        b = np.array(self.betas, dtype=np.float64).reshape(-1)
        if len(b) < 1:
            raise ValueError("schedule needs at least one step")
        if not np.all((b > 0) & (b < 1)):
            raise ValueError("every beta must lie in (0, 1)")
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "alphas", 1.0 - b)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - b))

    @classmethod
    def linear(cls, steps=200, beta_start=1e-4, beta_end=0.02):
        return cls(np.linspace(beta_start, beta_end, steps))

    @classmethod
    def constant(cls, beta, steps):
        return cls(np.full(steps, float(beta)))

    @property
    def T(self):
        return len(self.betas)

    def _index(self, t, allow_zero=True):
        t = np.asarray(t)
        if not np.issubdtype(t.dtype, np.integer):
            if not np.all(t == np.round(t)):
                raise BadTimestep(f"timesteps must be integers, got {t}")
            t = t.astype(np.int64)
        lo = 0 if allow_zero else 1
        if np.any(t < lo) or np.any(t > self.T):
            raise BadTimestep(f"timestep out of range [{lo}, {self.T}]: {t}")
        return t

    def alpha_bar(self, t):
        """ᾱ_t with the convention ᾱ_0 = 1."""
        t = self._index(t)
        return np.where(t == 0, 1.0, self.alpha_bars[np.maximum(t, 1) - 1])

    def beta(self, t):
        return self.betas[self._index(t, allow_zero=False) - 1]

    def alpha(self, t):
        return self.alphas[self._index(t, allow_zero=False) - 1]


def forward_diffuse(x0, t, schedule, noise):
    """Closed-form ``x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·noise``.

    ``t`` may be a scalar or one step per leading batch entry.
    """
    is_latent = isinstance(x0, LatentSeq)
    x = x0.tokens if is_latent else np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x.shape:
        raise ShapeMismatch(f"noise {noise.shape} does not match x0 {x.shape}")
    ab = schedule.alpha_bar(t)
    if np.ndim(ab):
        ab = ab.reshape(ab.shape + (1,) * (x.ndim - ab.ndim))
    out = np.sqrt(ab) * x + np.sqrt(1.0 - ab) * noise
    return LatentSeq(x0.level, out, x0.mask) if is_latent else out


def posterior_mean(x_t, x0, t, schedule):
    """Mean of q(x_{t−1} | x_t, x_0)."""
    ab = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    beta, alpha = schedule.beta(t), schedule.alpha(t)
    return (np.sqrt(ab_prev) * beta / (1 - ab)) * x0 + (np.sqrt(alpha) * (1 - ab_prev) / (1 - ab)) * x_t


def reverse_mean(x_t, eps_hat, t, schedule):
    """``μ_θ = (x_t − β_t/√(1−ᾱ_t)·ε̂) / √α_t``."""
    ab = schedule.alpha_bar(t)
    beta, alpha = schedule.beta(t), schedule.alpha(t)
    return (x_t - (beta / np.sqrt(1.0 - ab)) * eps_hat) / np.sqrt(alpha)


# ---------------------------------------------------------------------------
# configuration and level wiring


CONDITIONING = ("adaln", "additive")


@dataclass
class DiffusionConfig:
    n_classes: int = 3
    latent_dim: int = 16
    hidden: int = 32
    heads: int = 2
    blocks: int = 2
    time_dim: int = 64
    steps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    lr: float = 2e-3
    batch_size: int = 32
    clip: float = 1.0
    max_len: int = 64
    levels: tuple = ALL_LEVELS
    seed: int = 0
    conditioning: str = "adaln"  # or "additive": c and γ_t added to the input only

    def __post_init__(self):
        self.levels = tuple(sorted({LEVEL_ALIASES.get(x, x) for x in self.levels}))
        for lv in self.levels:
            check_level(lv)
        if AMINO_ACID not in self.levels:
            raise CannotRemoveSequenceLevel("the amino-acid level is required for evaluation")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be at least 2")
        if self.max_len not in MAX_LENGTHS:
            raise ConfigError(f"max_len must be one of {MAX_LENGTHS}")
        if self.hidden % self.heads:
            raise ConfigError("hidden must be divisible by heads")
        if self.conditioning not in CONDITIONING:
            raise ConfigError(f"conditioning must be one of {CONDITIONING}")

    def to_dict(self):
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d


def ablate_levels(config, remove):
    """Copy of ``config`` with the named levels removed (amino-acid level must stay)."""
    remove = {LEVEL_ALIASES.get(x, x) for x in ([remove] if isinstance(remove, (str, int)) else remove)}
    if AMINO_ACID in remove:
        raise CannotRemoveSequenceLevel("we cannot remove the amino-acid level")
    for lv in remove:
        check_level(lv)
    return replace(config, levels=tuple(lv for lv in config.levels if lv not in remove))


def lower_level(level, active):
    """Nearest active level strictly below ``level``, or None (zero conditioning)."""
    below = [lv for lv in active if lv < level]
    return max(below) if below else None


def condition_matrix(conditions, n_classes):
    """Rows of class weights: a single id is one-hot, a label set averages its members."""
    rows = np.zeros((len(conditions), n_classes))
    for i, c in enumerate(conditions):
        ids = [c] if np.isscalar(c) else list(c)
        if not ids:
            raise ValueError("empty label set")
        for k in ids:
            k = int(k)
            if not 1 <= k <= n_classes:
                raise ValueError(f"class id {k} outside 1..{n_classes}")
            rows[i, k - 1] += 1.0 / len(ids)
    return rows


# ---------------------------------------------------------------------------
# denoiser


class LevelDenoiser(Module):
    def __init__(self, level, config, rng):
        self.level = check_level(level)
        c = config
        self.config = config
        self.in_proj = Linear(c.latent_dim, c.hidden, rng)
        self.flow = Parameter(np.eye(c.latent_dim) + rng.normal(scale=0.01, size=(c.latent_dim, c.latent_dim)))
        self.up_proj = Linear(c.latent_dim, c.hidden, rng, bias=False)
        self.cond_table = Parameter(rng.normal(scale=0.5, size=(c.n_classes, c.hidden)))
        self.time_mlp = MLP([c.time_dim, c.hidden, c.hidden], rng)
        if c.conditioning == "adaln":
            self.blocks = [AdaLNBlock(c.hidden, c.heads, rng) for _ in range(c.blocks)]
            self.final_mod = Linear(c.hidden, 2 * c.hidden, rng)
            self.final_mod.weight.assign(np.zeros_like(self.final_mod.weight.data))
            self.final_mod.bias.assign(np.zeros_like(self.final_mod.bias.data))
        else:
            self.blocks = [TransformerBlock(c.hidden, c.heads, rng) for _ in range(c.blocks)]
            self.norm = LayerNorm(c.hidden)
        self.out = Linear(c.hidden, c.latent_dim, rng)
        self.fitted = False

    def forward(self, z_t, lower, cond, t, key_mask=None):
        """``z_t``, ``lower``: (B, L, d); ``cond``: (B, K) class weights; ``t``: (B,)."""
        b, n, _ = np.shape(z_t)
        hid = self.config.hidden
        h = self.in_proj(z_t)
        if lower is not None:
            h = T.add(h, self.up_proj(T.matmul(lower, self.flow)))
        c_emb = T.matmul(np.asarray(cond, dtype=np.float64), self.cond_table)
        t_emb = self.time_mlp(sinusoidal_embedding(t, self.config.time_dim))
        ct = T.add(c_emb, t_emb)
        h = T.add(h, T.reshape(ct, (b, 1, hid)))
        h = T.add(h, sinusoidal_embedding(np.arange(n), hid))
        if self.config.conditioning == "additive":
            for block in self.blocks:
                h = block(h, key_mask=key_mask)
            return self.out(self.norm(h))
        for block in self.blocks:
            h = block(h, ct, key_mask=key_mask)
        m = T.reshape(self.final_mod(T.silu(ct)), (b, 1, 2 * hid))
        h = T.add(T.mul(T.layer_norm(h), T.add(m[:, :, hid:], 1.0)), m[:, :, :hid])
        return self.out(h)


# ---------------------------------------------------------------------------
# data


@dataclass
class LatentDataset:
    """Ground-truth latents per level (lists of (L, d) arrays) with condition labels."""
    latents: dict
    labels: list
    ids: list = None

    def __post_init__(self):
        n = len(self.labels)
        for lv, items in self.latents.items():
            if len(items) != n:
                raise ShapeMismatch(f"level {lv} has {len(items)} latents for {n} labels")
        lens = [[len(x) for x in items] for items in self.latents.values()]
        if lens and any(row != lens[0] for row in lens):
            raise ShapeMismatch("latent sequences differ in length across levels")
        if self.ids is None:
            self.ids = [str(i) for i in range(n)]

    def __len__(self):
        return len(self.labels)

    def lengths(self):
        first = next(iter(self.latents.values()))
        return [len(x) for x in first]

    def require(self, levels):
        missing = [lv for lv in levels if lv not in self.latents]
        if missing:
            raise MissingLevelData(f"no ground-truth latents for levels {missing}")


@dataclass
class PreparedData:
    z: dict
    mask: np.ndarray
    cond: np.ndarray


@dataclass
class TrainStreams:
    """Independent RNG streams: shuffling and timesteps are shared, noise is per level."""
    shuffle: np.random.Generator
    timestep: np.random.Generator
    noise: dict

    @classmethod
    def from_seed(cls, seed):
        return cls(np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1]),
                   {lv: np.random.default_rng([seed, 2, lv]) for lv in ALL_LEVELS})


@dataclass
class SampleResult:
    conditions: list
    lengths: list
    latents: dict  # level -> list of (L, d) arrays in VAE units
    sequences: list = field(default_factory=list)
    geometry: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# pipeline


class HierarchicalDiffusion:
    def __init__(self, config=None):
        self.config = config or DiffusionConfig()
        c = self.config
        self.levels = c.levels
        self.schedule = DiffusionSchedule.linear(c.steps, c.beta_start, c.beta_end)
        self.denoisers = {lv: LevelDenoiser(lv, c, np.random.default_rng([c.seed, 10, lv]))
                          for lv in self.levels}
        self.optimizers = {lv: Adam(m.parameters(), lr=c.lr) for lv, m in self.denoisers.items()}
        self.latent_stats = {}
        self.class_lengths = {}

    def lower_of(self, level):
        return lower_level(level, self.levels)

    # -- single denoising call -------------------------------------------

    def denoise_step(self, level, z_t, lower, cond, t, key_mask=None):
        """Predicted noise ε̂ for ``z_t`` (VAE-normalized units); no gradient recording."""
        if level not in self.denoisers:
            raise LevelMismatch(f"level {LEVEL_NAMES.get(level, level)} is not active")
        z_t = np.asarray(z_t, dtype=np.float64)
        single = z_t.ndim == 2
        if single:
            z_t = z_t[None]
            lower = None if lower is None else np.asarray(lower, dtype=np.float64)[None]
            cond = np.atleast_2d(cond)
            key_mask = None if key_mask is None else np.asarray(key_mask)[None]
        if lower is not None and np.shape(lower) != z_t.shape:
            raise ShapeMismatch(f"lower latent {np.shape(lower)} vs {z_t.shape}")
        if level == ATOM and lower is not None and np.any(lower != 0):
            raise LevelMismatch("the atom level's lower latent must be zero")
        if z_t.shape[-1] != self.config.latent_dim:
            raise ShapeMismatch(f"latent dim {z_t.shape[-1]} vs configured {self.config.latent_dim}")
        if self.lower_of(level) is None:
            lower = None
        t = np.broadcast_to(np.asarray(t), (len(z_t),))
        eps = self.denoisers[level](z_t, lower, cond, t, key_mask).data
        return eps[0] if single else eps

    # -- training ----------------------------------------------------------

    def _fit_stats(self, dataset):
        for lv in ALL_LEVELS:
            if lv not in dataset.latents or lv in self.latent_stats:
                continue
            flat = np.concatenate([np.asarray(x)[: self.config.max_len] for x in dataset.latents[lv]])
            mu = flat.mean(axis=0)
            sd = np.maximum(flat.std(axis=0), 1e-6)
            self.latent_stats[lv] = (mu, sd)

    def normalize(self, level, z):
        mu, sd = self.latent_stats[level]
        return (np.asarray(z) - mu) / sd

    def denormalize(self, level, z):
        mu, sd = self.latent_stats[level]
        return np.asarray(z) * sd + mu

    def prepare(self, dataset):
        """Normalize, crop to ``max_len`` and pad every level; all levels with data are kept."""
        self._fit_stats(dataset)
        lengths = [min(n, self.config.max_len) for n in dataset.lengths()]
        n, lmax, d = len(dataset), max(lengths), self.config.latent_dim
        mask = np.zeros((n, lmax), dtype=bool)
        for i, ln in enumerate(lengths):
            mask[i, :ln] = True
        z = {}
        for lv, items in dataset.latents.items():
            arr = np.zeros((n, lmax, d))
            for i, (x, ln) in enumerate(zip(items, lengths)):
                x = np.asarray(x, dtype=np.float64)
                if x.shape[1] != d:
                    raise ShapeMismatch(f"level {lv} latent dim {x.shape[1]} vs configured {d}")
                arr[i, :ln] = self.normalize(lv, x[:ln])
            z[lv] = arr
        for label, ln in zip(dataset.labels, lengths):
            key = label if np.isscalar(label) else tuple(label)
            self.class_lengths.setdefault(str(key), []).append(ln)
        return PreparedData(z, mask, condition_matrix(dataset.labels, self.config.n_classes))

    def _level_loss(self, level, data, idx, t, noisy):
        z0 = data.z[level][idx]
        mask = data.mask[idx]
        lower_lv = self.lower_of(level)
        lower = None if lower_lv is None else noisy[lower_lv]
        eps_true = noisy[("eps", level)]
        with Tape() as tape:
            pred = self.denoisers[level](noisy[level], lower, data.cond[idx], t, mask)
            w = mask[..., None].astype(np.float64)
            err = T.mul(T.square(T.sub(pred, eps_true)), w)
            loss = T.mul(T.sum_(err), 1.0 / (w.sum() * z0.shape[-1]))
        params = self.denoisers[level].parameters()
        grads = tape.backward(loss, params)
        return float(loss.data), grads

    def train_epoch(self, data, streams, train_levels=None, parallel=True):
        """One pass over ``data`` (a PreparedData); returns mean loss per trained level.

        Noise for every level present in the data is drawn on every batch,
        whether or not that level is trained, so a level's loss trajectory
        does not depend on which other levels are being fitted.
        """
        train_levels = self.levels if train_levels is None else tuple(train_levels)
        needed = set(train_levels) | {self.lower_of(lv) for lv in train_levels} - {None}
        missing = [lv for lv in needed if lv not in data.z]
        if missing:
            raise MissingLevelData(f"no ground-truth latents for levels {missing}")
        n = len(data.mask)
        order = streams.shuffle.permutation(n)
        bs = min(self.config.batch_size, n)
        totals = {lv: [] for lv in train_levels}
        pool = ThreadPoolExecutor(max_workers=len(train_levels)) if parallel and len(train_levels) > 1 else None
        try:
            for start in range(0, n, bs):
                idx = np.sort(order[start:start + bs])
                t = streams.timestep.integers(1, self.schedule.T + 1, size=len(idx))
                noisy = {}
                for lv in ALL_LEVELS:
                    eps = streams.noise[lv].standard_normal((len(idx),) + data.mask.shape[1:] + (self.config.latent_dim,))
                    if lv not in data.z:
                        continue
                    eps = eps * data.mask[idx][..., None]
                    noisy[lv] = forward_diffuse(data.z[lv][idx], t, self.schedule, eps)
                    noisy[("eps", lv)] = eps
                if pool is None:
                    results = {lv: self._level_loss(lv, data, idx, t, noisy) for lv in train_levels}
                else:
                    futures = {lv: pool.submit(self._level_loss, lv, data, idx, t, noisy) for lv in train_levels}
                    results = {lv: f.result() for lv, f in futures.items()}
                for lv, (loss, grads) in results.items():
                    grads, _ = clip_by_global_norm(grads, self.config.clip)
                    self.optimizers[lv].step(grads)
                    totals[lv].append(loss)
        finally:
            if pool is not None:
                pool.shutdown()
        for lv in train_levels:
            self.denoisers[lv].fitted = True
        return {lv: float(np.mean(v)) for lv, v in totals.items()}

    def fit(self, dataset, epochs, seed=None, train_levels=None, parallel=True, log=None):
        dataset.require(self.levels if train_levels is None else
                        set(train_levels) | {self.lower_of(lv) for lv in train_levels} - {None})
        data = self.prepare(dataset)
        streams = TrainStreams.from_seed(self.config.seed if seed is None else seed)
        history = {lv: [] for lv in (self.levels if train_levels is None else train_levels)}
        for epoch in range(epochs):
            losses = self.train_epoch(data, streams, train_levels, parallel)
            for lv, v in losses.items():
                history[lv].append(v)
            if log is not None and (epoch % 25 == 0 or epoch == epochs - 1):
                log(f"epoch {epoch} " + " ".join(f"L{lv}={v:.4f}" for lv, v in losses.items()))
        return history

    # -- sampling -----------------------------------------------------------

    def draw_lengths(self, conditions, rng):
        out = []
        for c in conditions:
            key = str(c if np.isscalar(c) else tuple(c))
            pool = self.class_lengths.get(key) or sum(self.class_lengths.values(), [])
            out.append(int(pool[rng.integers(len(pool))]) if pool else self.config.max_len)
        return out

    def sample(self, conditions, seed=0, lengths=None, vaes=None, decode_geometry=False):
        """Ancestral sampling of every active level, updated 1 → 2 → 3 within each step.

        Each level conditions on the lower level's latent from the start of the
        same step. With ``vaes`` (level -> LevelVAE) the final amino-acid
        latents are decoded to sequences.
        """
        unfitted = [lv for lv, m in self.denoisers.items() if not m.fitted]
        if unfitted or any(lv not in self.latent_stats for lv in self.levels):
            raise MissingCheckpoint(f"no trained denoiser for levels {unfitted or list(self.levels)}")
        if vaes is not None and AMINO_ACID not in vaes:
            raise MissingCheckpoint("decoding needs the amino-acid VAE")
        conditions = list(conditions)
        rng = np.random.default_rng(seed)
        if lengths is None:
            lengths = self.draw_lengths(conditions, rng)
        lengths = [min(int(n), self.config.max_len) for n in lengths]
        b, lmax, d = len(conditions), max(lengths), self.config.latent_dim
        mask = np.zeros((b, lmax), dtype=bool)
        for i, ln in enumerate(lengths):
            mask[i, :ln] = True
        m3 = mask[..., None]
        cond = condition_matrix(conditions, self.config.n_classes)
        z = {lv: rng.standard_normal((b, lmax, d)) * m3 for lv in self.levels}
        for t in range(self.schedule.T, 0, -1):
            snapshot = {lv: z[lv] for lv in self.levels}
            tt = np.full(b, t)
            for lv in self.levels:
                low = self.lower_of(lv)
                eps = self.denoise_step(lv, snapshot[lv], None if low is None else snapshot[low], cond, tt, mask)
                mean = reverse_mean(snapshot[lv], eps, t, self.schedule)
                if t > 1:
                    mean = mean + np.sqrt(self.schedule.beta(t)) * rng.standard_normal(mean.shape)
                z[lv] = mean * m3
        latents = {lv: [self.denormalize(lv, z[lv][i, :n]) for i, n in enumerate(lengths)]
                   for lv in self.levels}
        result = SampleResult(conditions, lengths, latents)
        if vaes is not None:
            result.sequences = vaes[AMINO_ACID].greedy_sequences(latents[AMINO_ACID])
            if decode_geometry:
                for lv in (ATOM, BACKBONE):
                    if lv in self.levels and lv in vaes:
                        result.geometry[lv] = [vaes[lv].decode_geometry(x) for x in latents[lv]]
        return result

    # -- persistence ------------------------------------------------------

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for lv, model in self.denoisers.items():
            tensors = dict(model.state_dict())
            mu, sd = self.latent_stats[lv]
            tensors["__stats.mean"], tensors["__stats.std"] = mu, sd
            meta = {"kind": "denoiser", "level": lv, "config": self.config.to_dict(),
                    "fitted": model.fitted, "class_lengths": self.class_lengths}
            path = directory / f"denoiser_level{lv}.ckpt"
            save_checkpoint(path, tensors, meta)
            paths.append(path)
        return paths

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        files = sorted(directory.glob("denoiser_level*.ckpt"))
        if not files:
            raise MissingCheckpoint(f"no denoiser checkpoints in {directory}")
        _, meta = load_checkpoint(files[0])
        cfg = dict(meta["config"])
        cfg["levels"] = tuple(cfg["levels"])
        pipe = cls(DiffusionConfig(**cfg))
        for lv in pipe.levels:
            path = directory / f"denoiser_level{lv}.ckpt"
            if not path.exists():
                raise MissingCheckpoint(f"missing checkpoint for level {LEVEL_NAMES[lv]}: {path}")
            tensors, meta = load_checkpoint(path)
            pipe.latent_stats[lv] = (tensors.pop("__stats.mean"), tensors.pop("__stats.std"))
            pipe.denoisers[lv].load_state_dict(tensors)
            pipe.denoisers[lv].fitted = bool(meta.get("fitted", True))
            pipe.class_lengths = {k: list(v) for k, v in meta.get("class_lengths", {}).items()}
        return pipe


def train_epoch(pipeline, data, streams, train_levels=None, parallel=True):
    return pipeline.train_epoch(data, streams, train_levels, parallel)


__all__ = [
    "DiffusionConfig", "DiffusionSchedule", "HierarchicalDiffusion", "LatentDataset",
    "LevelDenoiser", "SampleResult", "TrainStreams", "ablate_levels", "condition_matrix",
    "forward_diffuse", "lower_level", "posterior_mean", "reverse_mean", "train_epoch",
]
