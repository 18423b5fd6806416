"""Per-level protein VAE: message-passing encoders and autoregressive decoders.

Every level produces one latent token per residue, so the latent sequences
of the atom (1), backbone (2) and amino-acid (3) levels share the shape
``(L, d)``. Encoders only see SE(3)-invariant inputs: coordinates after
canonicalization, inter-frame Euler angles, side-chain torsions and the
sequence itself.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import geometry as geo
from .data_io.checkpoint import load_checkpoint, save_checkpoint
from .errors import DegenerateChain, LevelMismatch, MissingLevelData, ShapeMismatch
from .nn import tensor as T
from .nn.layers import LayerNorm, Linear, Module, TransformerBlock, sinusoidal_embedding
from .nn.optim import Adam, clip_by_global_norm
from .nn.tensor import Tape
from .residues import ALPHABET, decode, encode, residue_features

ATOM, BACKBONE, AMINO_ACID = 1, 2, 3
LEVEL_NAMES = {ATOM: "atom", BACKBONE: "backbone", AMINO_ACID: "amino_acid"}

COORD_SCALE = 0.1
MIN_DISTANCE = 1e-3
GAP_DIM = geo.SEQ_DIST_CLAMP

NODE_DIM = {AMINO_ACID: 25 + 3, BACKBONE: 9, ATOM: 12}
EDGE_DIM = {AMINO_ACID: GAP_DIM, BACKBONE: GAP_DIM + 6, ATOM: GAP_DIM}
PREFIX_DIM = {AMINO_ACID: 21, BACKBONE: 8, ATOM: 13}
OUT_DIM = {AMINO_ACID: 20, BACKBONE: 4, ATOM: 4}
START_TOKEN = 20


def check_level(level):
    if level not in LEVEL_NAMES:
        raise LevelMismatch(f"unknown level {level!r}; expected 1 (atom), 2 (backbone) or 3 (amino_acid)")
    return level


@dataclass
class VaeConfig:
    latent_dim: int = 16
    hidden: int = 32
    heads: int = 2
    blocks: int = 2
    rounds: int = 2
    threshold: float = geo.DEFAULT_THRESHOLD
    kl_weight: float = 1e-5
    lr: float = 3e-3
    final_lr_fraction: float = 0.1
    steps: int = 300
    batch_size: int = 32
    clip: float = 1.0
    seed: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LatentSeq:
    level: int
    tokens: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        check_level(self.level)
        tokens = np.array(self.tokens, dtype=np.float64)
        if tokens.ndim != 2:
            raise ShapeMismatch(f"latent tokens must be (L, d), got {tokens.shape}")
        mask = np.ones(len(tokens), dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != (len(tokens),):
            raise ShapeMismatch(f"mask shape {mask.shape} does not match {len(tokens)} tokens")
        tokens[~mask] = 0.0
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "mask", mask)

    def __len__(self):
        return int(self.mask.sum())

    @property
    def dim(self):
        return self.tokens.shape[1]


@dataclass(frozen=True)
class VaeOutput:
    mean: np.ndarray
    log_variance: np.ndarray
    sample: np.ndarray
    eps: np.ndarray


# ---------------------------------------------------------------------------
# featurization


@dataclass(frozen=True)
class LevelInput:
    """One protein prepared for one level: graph, decoder targets, decoder prefix."""
    level: int
    nodes: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    edges: np.ndarray
    targets: np.ndarray
    target_mask: np.ndarray
    prefix: np.ndarray

    def __len__(self):
        return len(self.nodes)


def invariant_pose(ca):
    """Rigid transform to the canonical pose; short or collinear chains use fewer anchors."""
    ca = geo.as_coords(ca)
    try:
        return geo.canonicalize(ca, fallback=True).applied
    except DegenerateChain:
        pass
    shift = -ca[0]
    moved = ca + shift
    far = np.flatnonzero(np.linalg.norm(moved, axis=1) >= geo.MIN_SEPARATION)
    if len(far) == 0:
        return geo.RigidTransform(np.eye(3), shift)
    r = geo.rodrigues_rotation(moved[far[0]])
    return geo.RigidTransform(r, r @ shift)


def backbone_steps(backbone):
    """Per-residue (distance to previous Cα, τ¹, τ², τ³); row 0 is undefined and zero."""
    backbone = np.asarray(backbone, dtype=np.float64)
    out = np.zeros((len(backbone), 4))
    if len(backbone) > 1:
        ca = backbone[:, 1]
        frames = geo.residue_frames(backbone)
        out[1:, 0] = np.linalg.norm(ca[1:] - ca[:-1], axis=1)
        out[1:, 1:] = geo.euler_angles_batch(frames[:-1], frames[1:])
    return out


def prefix_features(level, targets, mask=None):
    """Decoder input at position k, built from the target at k−1 (a start marker at k=0)."""
    check_level(level)
    n = len(targets)
    out = np.zeros((n, PREFIX_DIM[level]))
    if level == AMINO_ACID:
        codes = np.asarray(targets, dtype=np.int64)
        prev = np.concatenate([[START_TOKEN], codes[:-1]]) if n else codes
        out[np.arange(n), prev] = 1.0
        return out
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.ones_like(targets, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if level == BACKBONE:
        # step 0 has no predecessor, so positions 0 and 1 both see the start marker
        out[:2, 0] = 1.0
        for k in range(2, n):
            d, angles = targets[k - 1, 0], targets[k - 1, 1:]
            out[k, 1:] = [d * 0.25, *np.sin(angles), *np.cos(angles)]
        return out
    out[:1, 0] = 1.0
    if n > 1:
        m = mask[:-1].astype(np.float64)
        a = targets[:-1]
        out[1:, 1:5] = np.sin(a) * m
        out[1:, 5:9] = np.cos(a) * m
        out[1:, 9:13] = m
    return out


def featurize(record, level, threshold=geo.DEFAULT_THRESHOLD):
    """Build the level's graph and reconstruction targets from a ProteinRecord."""
    check_level(level)
    pose = invariant_pose(record.ca_coords)
    ca = pose.apply(record.ca_coords)
    graph = geo.build_residue_graph(ca, None, threshold)
    s, r = graph.senders, graph.receivers
    edges = graph.edge_features
    n = len(record)
    if level == AMINO_ACID:
        nodes = np.concatenate([residue_features(record.sequence), ca * COORD_SCALE], axis=1)
        targets = encode(record.sequence)
        tmask = np.ones(n, dtype=bool)
    elif level == BACKBONE:
        if record.backbone is None:
            raise MissingLevelData(f"record {record.id} has no backbone coordinates")
        bb = pose.apply(record.backbone.reshape(-1, 3)).reshape(n, 3, 3)
        nodes = bb.reshape(n, 9) * COORD_SCALE
        frames = geo.residue_frames(record.backbone)
        tau = geo.euler_angles_batch(frames[r], frames[s]) if len(s) else np.zeros((0, 3))
        edges = np.concatenate([edges, np.sin(tau), np.cos(tau)], axis=1)
        targets = backbone_steps(record.backbone)
        tmask = np.ones((n, 4), dtype=bool)
        tmask[0] = False
    else:
        if record.torsions is None:
            raise MissingLevelData(f"record {record.id} has no side-chain torsions")
        chi, m = record.torsions.angles, record.torsions.mask
        mf = m.astype(np.float64)
        nodes = np.concatenate([np.sin(chi) * mf, np.cos(chi) * mf, mf], axis=1)
        targets = np.where(m, chi, 0.0)
        tmask = m.copy()
    prefix = prefix_features(level, targets, tmask)
    return LevelInput(level, nodes, s, r, edges.reshape(len(s), EDGE_DIM[level]), targets, tmask, prefix)


@dataclass
class Batch:
    level: int
    nodes: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    edges: np.ndarray
    aggregate: sp.csr_matrix
    pad_index: np.ndarray
    key_mask: np.ndarray
    targets: np.ndarray
    target_mask: np.ndarray
    prefix: np.ndarray
    lengths: list = field(default_factory=list)


def mean_aggregator(receivers, n_nodes):
    """Sparse (nodes × edges) matrix averaging incoming messages per receiver."""
    receivers = np.asarray(receivers, dtype=np.int64)
    deg = np.bincount(receivers, minlength=n_nodes).astype(np.float64)
    vals = 1.0 / deg[receivers] if len(receivers) else np.zeros(0)
    return sp.csr_matrix((vals, (receivers, np.arange(len(receivers)))), shape=(n_nodes, len(receivers)))


def collate(inputs):
    """Concatenate graphs node-wise and pad per-residue arrays to the longest protein."""
    if not inputs:
        raise ValueError("empty batch")
    level = inputs[0].level
    if any(x.level != level for x in inputs):
        raise LevelMismatch("cannot batch inputs from different levels")
    lengths = [len(x) for x in inputs]
    b, lmax, n = len(inputs), max(lengths), sum(lengths)
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    senders = np.concatenate([x.senders + o for x, o in zip(inputs, offsets)]).astype(np.int64)
    receivers = np.concatenate([x.receivers + o for x, o in zip(inputs, offsets)]).astype(np.int64)
    pad_index = np.full((b, lmax), n, dtype=np.int64)
    key_mask = np.zeros((b, lmax), dtype=bool)
    tshape = inputs[0].targets.shape[1:]
    targets = np.zeros((b, lmax) + tshape, dtype=inputs[0].targets.dtype)
    tmask = np.zeros((b, lmax) + tshape, dtype=bool)
    prefix = np.zeros((b, lmax, PREFIX_DIM[level]))
    for i, (x, o, ln) in enumerate(zip(inputs, offsets, lengths)):
        pad_index[i, :ln] = np.arange(o, o + ln)
        key_mask[i, :ln] = True
        targets[i, :ln] = x.targets
        tmask[i, :ln] = x.target_mask
        prefix[i, :ln] = x.prefix
    return Batch(level, np.concatenate([x.nodes for x in inputs]), senders, receivers,
                 np.concatenate([x.edges for x in inputs]), mean_aggregator(receivers, n),
                 pad_index, key_mask, targets, tmask, prefix, lengths)


# ---------------------------------------------------------------------------
# networks


class GraphEncoder(Module):
    """Bias-free message passing with mean aggregation; biases only in the readout.

    Each round computes ``m_ij = tanh(W_m [h_j ; e_ij])`` for edge ``j → i``,
    ``a_i = mean_j m_ij`` and ``h_i ← tanh(W_s h_i + W_a a_i)``.
    """

    def __init__(self, node_dim, edge_dim, hidden, latent, rounds, rng):
        self.embed = Linear(node_dim, hidden, rng, bias=False)
        self.message = [Linear(hidden + edge_dim, hidden, rng, bias=False) for _ in range(rounds)]
        self.self_update = [Linear(hidden, hidden, rng, bias=False) for _ in range(rounds)]
        self.agg_update = [Linear(hidden, hidden, rng, bias=False) for _ in range(rounds)]
        self.mean_head = Linear(hidden, latent, rng)
        self.logvar_head = Linear(hidden, latent, rng)
        # start with a narrow posterior so early reconstructions are not drowned in noise
        self.logvar_head.weight.assign(self.logvar_head.weight.data * 0.1)
        self.logvar_head.bias.assign(np.full(latent, -4.0))

    def forward(self, nodes, senders, edges, aggregate):
        h = T.tanh(self.embed(nodes))
        for msg, upd_s, upd_a in zip(self.message, self.self_update, self.agg_update):
            m = T.tanh(msg(T.concat([T.take_rows(h, senders), edges], axis=-1)))
            a = T.sparse_matmul(aggregate, m)
            h = T.tanh(T.add(upd_s(h), upd_a(a)))
        return self.mean_head(h), self.logvar_head(h)


class AutoregressiveDecoder(Module):
    """Causal transformer: position k sees the latent tokens and prefix features up to k."""

    def __init__(self, latent_dim, prefix_dim, out_dim, hidden, heads, blocks, rng):
        self.hidden = hidden
        self.latent_in = Linear(latent_dim, hidden, rng)
        self.prefix_in = Linear(prefix_dim, hidden, rng, bias=False)
        self.blocks = [TransformerBlock(hidden, heads, rng) for _ in range(blocks)]
        self.norm = LayerNorm(hidden)
        self.head = Linear(hidden, out_dim, rng)

    def forward(self, latent, prefix, key_mask=None):
        n = latent.shape[1]
        x = T.add(T.add(self.latent_in(latent), self.prefix_in(prefix)),
                  sinusoidal_embedding(np.arange(n), self.hidden))
        for block in self.blocks:
            x = block(x, key_mask=key_mask, causal=True)
        return self.head(self.norm(x))


def positive_distance(raw):
    return T.add(T.softplus(raw), MIN_DISTANCE)


def report_geometry(level, raw):
    """Map raw decoder outputs to reported features: positive distances, wrapped angles."""
    raw = np.asarray(raw, dtype=np.float64)
    if level == BACKBONE:
        dist = np.logaddexp(0.0, raw[..., :1]) + MIN_DISTANCE
        return np.concatenate([dist, geo.wrap_angle(raw[..., 1:])], axis=-1)
    return geo.wrap_angle(raw)


@dataclass(frozen=True)
class VaeLossParts:
    total: float
    ce: float
    mse: float
    kl: float


def kl_standard_normal(mean, logvar):
    """Per-token KL(N(μ, σ²) ‖ N(0, I)) summed over latent dims."""
    return T.mul(T.sum_(T.sub(T.add(T.square(mean), T.exp(logvar)), T.add(logvar, 1.0)), axis=-1), 0.5)


def sequence_cross_entropy(logits, targets, key_mask):
    """Mean negative log-likelihood of the target residues over unpadded positions."""
    onehot = np.zeros(np.shape(logits))
    bi, li = np.nonzero(key_mask)
    onehot[bi, li, np.asarray(targets)[bi, li]] = 1.0
    return T.mul(T.sum_(T.mul(T.log_softmax(logits), onehot)), -1.0 / max(len(bi), 1))


def wrapped_difference(pred, target):
    """``pred − target`` shifted by the nearest multiple of 2π (shift held constant)."""
    raw = T._data(pred) - target
    shift = 2 * np.pi * np.round(raw / (2 * np.pi))
    return T.sub(T.sub(pred, target), shift)


class LevelVAE(Module):
    def __init__(self, level, config, rng):
        self.level = check_level(level)
        self.config = config
        c = config
        self.encoder = GraphEncoder(NODE_DIM[level], EDGE_DIM[level], c.hidden, c.latent_dim, c.rounds, rng)
        self.decoder = AutoregressiveDecoder(c.latent_dim, PREFIX_DIM[level], OUT_DIM[level],
                                             c.hidden, c.heads, c.blocks, rng)

    def encode_batch(self, batch):
        if batch.level != self.level:
            raise LevelMismatch(f"{LEVEL_NAMES[self.level]} model given {LEVEL_NAMES[batch.level]} input")
        mean, logvar = self.encoder(batch.nodes, batch.senders, batch.edges, batch.aggregate)
        zero = np.zeros((1, self.config.latent_dim))
        return (T.take_rows(T.concat([mean, zero], axis=0), batch.pad_index),
                T.take_rows(T.concat([logvar, zero], axis=0), batch.pad_index))

    def encode(self, level, inp, rng=None):
        """Posterior of one protein; ``sample`` uses ε drawn from ``rng`` (zero when None)."""
        if check_level(level) != self.level:
            raise LevelMismatch(f"{LEVEL_NAMES[self.level]} encoder asked for level {LEVEL_NAMES[level]}")
        if not isinstance(inp, LevelInput):
            raise LevelMismatch("encode expects a LevelInput from featurize()")
        mean, logvar = self.encode_batch(collate([inp]))
        mu, lv = mean.data[0], logvar.data[0]
        eps = np.zeros_like(mu) if rng is None else rng.standard_normal(mu.shape)
        return VaeOutput(mu, lv, mu + np.exp(0.5 * lv) * eps, eps)

    def encode_many(self, inputs, batch_size=64):
        out = []
        for i in range(0, len(inputs), batch_size):
            chunk = inputs[i:i + batch_size]
            mean, _ = self.encode_batch(collate(chunk))
            out.extend(mean.data[j, :len(x)].copy() for j, x in enumerate(chunk))
        return out

    # -- decoding ---------------------------------------------------------

    def _logits(self, latent, prefix, key_mask=None):
        latent = np.asarray(latent, dtype=np.float64)
        squeeze = latent.ndim == 2
        if squeeze:
            latent, prefix = latent[None], np.asarray(prefix)[None]
        out = self.decoder(latent, prefix, key_mask).data
        return out[0] if squeeze else out

    def sequence_distributions(self, latent, tokens):
        """Next-token distributions at every position given teacher tokens; (L, 20)."""
        self._require(AMINO_ACID)
        z = _tokens(latent)
        logits = self._logits(z, prefix_features(AMINO_ACID, np.asarray(tokens, dtype=np.int64)))
        return np.exp(T.log_softmax(logits).data)

    def decode_sequence(self, latent, prefix=()):
        """Distribution over the 20 residues for the position after ``prefix``."""
        self._require(AMINO_ACID)
        z = _tokens(latent)
        codes = encode(prefix) if isinstance(prefix, str) else np.asarray(prefix, dtype=np.int64)
        k = len(codes)
        if k >= len(z):
            raise ShapeMismatch(f"prefix of length {k} leaves no position in a length-{len(z)} latent")
        padded = np.concatenate([codes, np.zeros(len(z) - k, dtype=np.int64)])
        return self.sequence_distributions(z, padded)[k]

    def greedy_sequences(self, latents):
        """Greedy decode of a list of latents, batched across proteins."""
        self._require(AMINO_ACID)
        zs = [_tokens(z) for z in latents]
        lengths = [len(z) for z in zs]
        b, lmax = len(zs), max(lengths)
        lat = np.zeros((b, lmax, zs[0].shape[1]))
        mask = np.zeros((b, lmax), dtype=bool)
        for i, z in enumerate(zs):
            lat[i, :len(z)] = z
            mask[i, :len(z)] = True
        codes = np.zeros((b, lmax), dtype=np.int64)
        for k in range(lmax):
            prefix = np.stack([prefix_features(AMINO_ACID, c) for c in codes])
            # causal attention: positions beyond k cannot influence position k
            logits = self._logits(lat[:, :k + 1], prefix[:, :k + 1], mask[:, :k + 1])
            codes[:, k] = np.argmax(logits[:, k], axis=-1)
        return [decode(c[:n]) for c, n in zip(codes, lengths)]

    def greedy_sequence(self, latent):
        return self.greedy_sequences([latent])[0]

    def decode_geometry(self, latent, level=None):
        """Greedy autoregressive geometry: (L, 4) distances/Euler angles or χ angles."""
        level = self.level if level is None else check_level(level)
        if level == AMINO_ACID:
            raise LevelMismatch("decode_geometry covers the atom and backbone levels")
        self._require(level)
        z = _tokens(latent)
        n = len(z)
        feats = np.zeros((n, 4))
        for k in range(n):
            prefix = prefix_features(level, feats)
            raw = self._logits(z[:k + 1], prefix[:k + 1])
            feats[k] = report_geometry(level, raw[k])
        if level == BACKBONE:
            feats[0] = 0.0
        return feats

    def _require(self, level):
        if self.level != level:
            raise LevelMismatch(f"this is the {LEVEL_NAMES[self.level]} model, not {LEVEL_NAMES[level]}")


def _tokens(latent):
    return latent.tokens[latent.mask] if isinstance(latent, LatentSeq) else np.asarray(latent, dtype=np.float64)


# ---------------------------------------------------------------------------
# loss and training


def vae_loss(model, batch, rng=None, kl_weight=None):
    """``CE + MSE + w·KL`` for one batch; returns the loss tensor and its parts.

    The sequence level contributes only cross-entropy and the geometry levels
    only squared error, so the other reconstruction term is reported as 0.
    """
    kl_weight = model.config.kl_weight if kl_weight is None else kl_weight
    mean, logvar = model.encode_batch(batch)
    valid = batch.key_mask.astype(np.float64)
    if rng is None:
        z = mean
    else:
        eps = rng.standard_normal(mean.shape) * valid[..., None]
        z = T.add(mean, T.mul(T.exp(T.mul(logvar, 0.5)), eps))
    raw = model.decoder(z, batch.prefix, batch.key_mask)
    n_tok = max(valid.sum(), 1.0)
    ce = mse = None
    if batch.level == AMINO_ACID:
        ce = recon = sequence_cross_entropy(raw, batch.targets, batch.key_mask)
    else:
        if batch.level == BACKBONE:
            pred = T.concat([positive_distance(T.getitem(raw, (Ellipsis, slice(0, 1)))),
                             T.getitem(raw, (Ellipsis, slice(1, 4)))], axis=-1)
            diff = T.concat([T.sub(T.getitem(pred, (Ellipsis, slice(0, 1))), batch.targets[..., :1]),
                             wrapped_difference(T.getitem(pred, (Ellipsis, slice(1, 4))),
                                                batch.targets[..., 1:])], axis=-1)
        else:
            diff = wrapped_difference(raw, batch.targets)
        m = batch.target_mask.astype(np.float64)
        mse = T.mul(T.sum_(T.mul(T.square(diff), m)), 1.0 / max(m.sum(), 1.0))
        recon = mse
    kl = T.mul(T.sum_(T.mul(kl_standard_normal(mean, logvar), valid)), 1.0 / n_tok)
    total = T.add(recon, T.mul(kl, kl_weight))
    parts = VaeLossParts(float(total.data), 0.0 if ce is None else float(ce.data),
                         0.0 if mse is None else float(mse.data), float(kl.data))
    return total, parts


def train_vae(records, level, config=None, inputs=None, log=None):
    """Fit one level's VAE by Adam on random minibatches; returns (model, history)."""
    config = config or VaeConfig()
    check_level(level)
    if inputs is None:
        inputs = [featurize(r, level, config.threshold) for r in records]
    init_rng = np.random.default_rng([config.seed, level, 0])
    data_rng = np.random.default_rng([config.seed, level, 1])
    model = LevelVAE(level, config, init_rng)
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    history = []
    bs = min(config.batch_size, len(inputs))
    for step in range(config.steps):
        # linear decay to final_lr_fraction·lr over the run
        frac = step / max(config.steps - 1, 1)
        opt.state.lr = config.lr * (1.0 - (1.0 - config.final_lr_fraction) * frac)
        idx = np.sort(data_rng.choice(len(inputs), size=bs, replace=False))
        batch = collate([inputs[i] for i in idx])
        with Tape() as tape:
            loss, parts = vae_loss(model, batch, data_rng)
        grads = tape.backward(loss, params)
        grads, _ = clip_by_global_norm(grads, config.clip)
        opt.step(grads)
        history.append(parts)
        if log is not None and (step % 50 == 0 or step == config.steps - 1):
            log(f"vae level {level} step {step} loss {parts.total:.4f}")
    return model, history


def save_vae(path, model):
    meta = {"kind": "vae", "level": model.level, "config": model.config.to_dict()}
    save_checkpoint(path, model.state_dict(), meta)


def load_vae(path):
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "vae":
        raise LevelMismatch(f"{path} is not a VAE checkpoint")
    config = VaeConfig(**meta["config"])
    model = LevelVAE(int(meta["level"]), config, np.random.default_rng(0))
    model.load_state_dict(tensors)
    return model


# ---------------------------------------------------------------------------
# coarse reconstruction of a Cα trace from decoded backbone steps


def fit_step_direction(records):
    """Mean unit direction of Cα(k) − Cα(k−1) in residue k−1's local frame."""
    acc = np.zeros(3)
    for r in records:
        if r.backbone is None or len(r) < 2:
            continue
        frames = geo.residue_frames(r.backbone)
        d = r.backbone[1:, 1] - r.backbone[:-1, 1]
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        acc += np.einsum("kji,kj->i", frames[:-1], d)
    norm = np.linalg.norm(acc)
    return acc / norm if norm > 0 else np.array([1.0, 0.0, 0.0])


def trace_from_steps(steps, direction):
    """Chain frames by the decoded Euler angles and step each Cα along a fixed local direction."""
    steps = np.asarray(steps, dtype=np.float64)
    frame = np.eye(3)
    pos = np.zeros(3)
    out = [pos.copy()]
    for k in range(1, len(steps)):
        pos = pos + steps[k, 0] * (frame @ direction)
        frame = frame @ geo.zyz_matrix(*steps[k, 1:])
        out.append(pos.copy())
    return np.array(out)


__all__ = [
    "ALPHABET", "AMINO_ACID", "ATOM", "AutoregressiveDecoder", "BACKBONE", "Batch", "GraphEncoder",
    "LatentSeq", "LevelInput", "LevelVAE", "VaeConfig", "VaeLossParts", "VaeOutput", "collate",
    "featurize", "kl_standard_normal", "load_vae", "prefix_features", "report_geometry",
    "save_vae", "train_vae", "vae_loss",
]
