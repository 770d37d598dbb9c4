"""Hidden-state conditional fields.

Each label owns a contiguous block of ``r`` hidden states. LDCRF and LDCNF
score hidden paths with a chain over the ``H = L * r`` hidden states and
obtain label probabilities by summing over paths that stay inside the
blocks of the observed labels (done by masking node scores with ``-inf``).

HCRF assigns one label to a whole window: every label ``y`` gets its own
chain in which the hidden node scores are shifted by label-compatibility
weights ``compat[y]``, and ``p(y | window)`` is the normalized partition
function of that chain. Per-epoch labels come from a centered sliding window.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .chaingraph import batch_expectations, logsumexp
from .cnf import GateLayer, identity_gate, init_gate
from .core import (
    Dataset,
    LabelAlphabet,
    LabelSequence,
    ObservationSequence,
    chunk_dataset,
    context_features,
    pack,
)
from .errors import ConfigurationError, InputError, NumericError
from .training import TrainConfig, run_optimizer

__all__ = [
    "VARIANTS",
    "HiddenMap",
    "LatentModel",
    "ldcrf_nll_and_gradient",
    "ldcrf_label_marginals",
    "ldcrf_predict",
    "hcrf_nll_and_gradient",
    "hcrf_classify_window",
    "hcrf_predict_sequence",
    "sliding_windows",
    "nll_and_gradient",
    "predict",
    "train_latent",
]

VARIANTS = ("hcrf", "ldcrf", "ldcnf")


@dataclass(frozen=True)
class HiddenMap:
    n_labels: int
    states_per_label: int

    def __post_init__(self):
        if self.states_per_label < 1 or self.n_labels < 1:
            raise ConfigurationError("states_per_label and n_labels must be >= 1")

    @property
    def H(self) -> int:
        return self.n_labels * self.states_per_label

    @property
    def owner(self) -> np.ndarray:
        """Label owning each hidden state."""
        return np.arange(self.H) // self.states_per_label

    def block(self, label: int) -> range:
        r = self.states_per_label
        return range(label * r, (label + 1) * r)


@dataclass(frozen=True, eq=False)
class LatentModel:
    variant: str
    hidden: HiddenMap
    state: np.ndarray  # (H, d): d = m, or K with a gate layer
    trans: np.ndarray  # (H, H)
    bias: np.ndarray  # (H,)
    alphabet: LabelAlphabet
    l2: float = 1e-2
    gate: GateLayer | None = None
    compat: np.ndarray | None = None  # (L, H), HCRF only
    window: int = 1  # HCRF window length
    context_window: int = 0  # gate input context (LDCNF)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown latent variant {self.variant!r}")
        H, L = self.hidden.H, self.alphabet.size
        if self.hidden.n_labels != L:
            raise InputError("hidden map label count differs from the alphabet")
        for name in ("state", "trans", "bias"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.state.ndim != 2 or self.state.shape[0] != H:
            raise InputError(f"state weights must be ({H}, d), got {self.state.shape}")
        if self.trans.shape != (H, H) or self.bias.shape != (H,):
            raise InputError("transition/bias shapes inconsistent with the hidden map")
        if self.variant == "ldcnf":
            if self.gate is None:
                raise ConfigurationError("LDCNF requires a gate layer")
            if self.gate.K != self.state.shape[1]:
                raise InputError("state width must equal the gate count")
        elif self.gate is not None:
            raise ConfigurationError(f"{self.variant} does not take a gate layer")
        if self.variant == "hcrf":
            if self.window < 1 or self.window % 2 == 0:
                raise ConfigurationError("HCRF window must be odd and >= 1")
            if self.compat is None:
                object.__setattr__(self, "compat", np.zeros((L, H)))
            object.__setattr__(self, "compat", np.asarray(self.compat, dtype=float))
            if self.compat.shape != (L, H):
                raise InputError(f"compat weights must be ({L}, {H})")
        elif self.compat is not None:
            raise ConfigurationError("label-compatibility weights are HCRF-only")
        for a in self._blocks():
            if not np.all(np.isfinite(a)):
                raise InputError("model weights must be finite")

    @property
    def kind(self) -> str:
        return self.variant

    @property
    def H(self) -> int:
        return self.hidden.H

    @property
    def L(self) -> int:
        return self.alphabet.size

    @property
    def m(self) -> int:
        if self.gate is None:
            return self.state.shape[1]
        return self.gate.d // (2 * self.context_window + 1)

    def _blocks(self) -> list[np.ndarray]:
        out = [self.state, self.trans, self.bias]
        if self.compat is not None:
            out.append(self.compat)
        if self.gate is not None:
            out.append(self.gate.weights)
        return out

    def to_vector(self) -> np.ndarray:
        """Flat parameters: state, trans, bias, then compat (HCRF) or gate weights (LDCNF)."""
        return np.concatenate([a.ravel() for a in self._blocks()])

    def from_vector(self, v) -> LatentModel:
        v = np.asarray(v, dtype=float)
        shapes = [a.shape for a in self._blocks()]
        parts, i = [], 0
        for s in shapes:
            k = int(np.prod(s))
            parts.append(v[i : i + k].reshape(s))
            i += k
        kw = dict(state=parts[0], trans=parts[1], bias=parts[2])
        if self.compat is not None:
            kw["compat"] = parts[3]
        if self.gate is not None:
            kw["gate"] = replace(self.gate, weights=parts[3])
        return replace(self, **kw)

    def inputs(self, x: np.ndarray) -> np.ndarray:
        if self.gate is None:
            return x
        return context_features(x, self.context_window)

    def _check(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.m:
            raise InputError(f"feature dimension {x.shape[-1]} != model dimension {self.m}")


def _features(model: LatentModel, inputs: np.ndarray):
    """Hidden-state feature activations and the gate outputs (if any)."""
    if model.gate is None:
        return inputs, None
    G = model.gate.act(model.gate.pre(inputs))
    return G, G


def _linear_grads(r_node, r_edge, feats) -> list[np.ndarray]:
    """Gradient blocks for state, trans and bias from node/edge residuals."""
    g_state = np.einsum("bth,btd->hd", r_node, feats)
    return [g_state.ravel(), r_edge.ravel(), r_node.sum(axis=(0, 1))]


def _gate_grad(model: LatentModel, r_node, inputs, G, mask):
    d_pre = (r_node @ model.state) * model.gate.act_deriv(G) * mask[:, :, None]
    return np.hstack([np.einsum("btk,btd->kd", d_pre, inputs), d_pre.sum(axis=(0, 1))[:, None]])


# --- LDCRF / LDCNF -------------------------------------------------------


def _ldcrf_packed(model: LatentModel, batch):
    inputs = batch.x
    feats, G = _features(model, inputs)
    node = model.bias + feats @ model.state.T
    log_zf, mu_f, xi_f = batch_expectations(node, model.trans, batch.lengths)
    owner = model.hidden.owner
    allowed = (owner[None, None, :] == batch.y[:, :, None]) | (batch.y[:, :, None] < 0)
    node_r = np.where(allowed, node, -np.inf)
    log_zr, mu_r, xi_r = batch_expectations(node_r, model.trans, batch.lengths)
    nll = float((log_zf - log_zr).sum())
    if not np.isfinite(nll):
        raise NumericError("non-finite latent negative log-likelihood")
    r_node = mu_f - mu_r
    r_edge = (xi_f - xi_r).sum(axis=0)
    parts = _linear_grads(r_node, r_edge, feats)
    if model.gate is not None:
        parts.append(_gate_grad(model, r_node, inputs, G, batch.mask).ravel())
    w = model.to_vector()
    nll += 0.5 * model.l2 * float(w @ w)
    return nll, np.concatenate(parts) + model.l2 * w


def _pack_sequences(model: LatentModel, data: Dataset):
    if len(data) == 0:
        raise InputError("dataset is empty")
    if data.m != model.m:
        raise InputError(f"dataset dimension {data.m} != model dimension {model.m}")
    return pack([model.inputs(x.epochs) for x, _ in data], [y.labels for _, y in data])


def ldcrf_nll_and_gradient(model: LatentModel, data: Dataset) -> tuple[float, np.ndarray]:
    """``-sum log p(Y|X)`` with ``p(Y|X) = Z_restricted / Z_full`` plus the L2 term."""
    if model.variant not in ("ldcrf", "ldcnf"):
        raise ConfigurationError(f"ldcrf objective does not apply to {model.variant}")
    return _ldcrf_packed(model, _pack_sequences(model, data))


def ldcrf_label_marginals(model: LatentModel, x: ObservationSequence) -> np.ndarray:
    """Per-epoch label posteriors ``(n, L)``: hidden marginals summed per block."""
    model._check(x.epochs)
    inputs = model.inputs(x.epochs)[None]
    feats, _ = _features(model, inputs)
    node = model.bias + feats @ model.state.T
    _, mu, _ = batch_expectations(node, model.trans, np.array([x.n]))
    return mu[0].reshape(x.n, model.L, model.hidden.states_per_label).sum(axis=2)


def ldcrf_predict(model: LatentModel, x: ObservationSequence) -> LabelSequence:
    """Per-epoch argmax of the label marginals; ties go to the smaller label index."""
    return LabelSequence(np.argmax(ldcrf_label_marginals(model, x), axis=1))


# --- HCRF -----------------------------------------------------------------


def sliding_windows(x: np.ndarray, W: int) -> np.ndarray:
    """Centered windows ``(n, W, m)``, edge-padded by repeating end epochs."""
    n = x.shape[0]
    c = W // 2
    idx = np.clip(np.arange(n)[:, None] + np.arange(-c, c + 1)[None, :], 0, n - 1)
    return x[idx]


def _hcrf_chains(model: LatentModel, windows: np.ndarray):
    N, W, _ = windows.shape
    L, H = model.L, model.H
    node = model.bias + windows @ model.state.T  # (N, W, H)
    node_y = node[:, None] + model.compat[None, :, None, :]  # (N, L, W, H)
    lengths = np.full(N * L, W)
    log_z, mu, xi = batch_expectations(node_y.reshape(N * L, W, H), model.trans, lengths)
    return log_z.reshape(N, L), mu.reshape(N, L, W, H), xi.reshape(N, L, H, H)


def _hcrf_posterior(log_z: np.ndarray) -> np.ndarray:
    return np.exp(log_z - logsumexp(log_z, axis=1)[:, None])


def _hcrf_packed(model: LatentModel, windows: np.ndarray, y: np.ndarray):
    log_z, mu, xi = _hcrf_chains(model, windows)
    N = windows.shape[0]
    log_norm = logsumexp(log_z, axis=1)
    nll = float((log_norm - log_z[np.arange(N), y]).sum())
    if not np.isfinite(nll):
        raise NumericError("non-finite HCRF negative log-likelihood")
    weight = np.exp(log_z - log_norm[:, None])
    weight[np.arange(N), y] -= 1.0
    r_node = np.einsum("nl,nlth->nth", weight, mu)
    r_edge = np.einsum("nl,nlij->ij", weight, xi)
    g_compat = np.einsum("nl,nlth->lh", weight, mu)
    g_state = np.einsum("nth,ntd->hd", r_node, windows)
    g_bias = r_node.sum(axis=(0, 1))
    w = model.to_vector()
    nll += 0.5 * model.l2 * float(w @ w)
    grad = np.concatenate([g_state.ravel(), r_edge.ravel(), g_bias, g_compat.ravel()])
    return nll, grad + model.l2 * w


def _hcrf_windows(model: LatentModel, data: Dataset):
    if len(data) == 0:
        raise InputError("dataset is empty")
    if data.m != model.m:
        raise InputError(f"dataset dimension {data.m} != model dimension {model.m}")
    windows = np.concatenate([sliding_windows(x.epochs, model.window) for x, _ in data])
    return windows, data.labels()


def hcrf_nll_and_gradient(model: LatentModel, data: Dataset) -> tuple[float, np.ndarray]:
    """Window-classification nll summed over every epoch's centered window."""
    if model.variant != "hcrf":
        raise ConfigurationError(f"hcrf objective does not apply to {model.variant}")
    return _hcrf_packed(model, *_hcrf_windows(model, data))


def hcrf_classify_window(model: LatentModel, window: ObservationSequence) -> tuple[int, np.ndarray]:
    if model.variant != "hcrf":
        raise ConfigurationError("not an HCRF model")
    if window.n != model.window:
        raise InputError(f"window has {window.n} epochs, model expects {model.window}")
    model._check(window.epochs)
    log_z, _, _ = _hcrf_chains(model, window.epochs[None])
    post = _hcrf_posterior(log_z)[0]
    return int(np.argmax(post)), post


def hcrf_predict_sequence(model: LatentModel, x: ObservationSequence) -> LabelSequence:
    if model.variant != "hcrf":
        raise ConfigurationError("not an HCRF model")
    model._check(x.epochs)
    log_z, _, _ = _hcrf_chains(model, sliding_windows(x.epochs, model.window))
    return LabelSequence(np.argmax(log_z, axis=1))


# --- dispatch and training ------------------------------------------------


def nll_and_gradient(model: LatentModel, data: Dataset):
    if model.variant == "hcrf":
        return hcrf_nll_and_gradient(model, data)
    return ldcrf_nll_and_gradient(model, data)


def predict(model: LatentModel, x: ObservationSequence) -> LabelSequence:
    if model.variant == "hcrf":
        return hcrf_predict_sequence(model, x)
    return ldcrf_predict(model, x)


def init_latent(
    variant: str,
    alphabet: LabelAlphabet,
    m: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
    identity: bool = False,
) -> LatentModel:
    """Random starting point. Hidden-state weights must not start equal:
    states in one block are interchangeable, so a symmetric start is a saddle.
    ``identity=True`` swaps the LDCNF gate for the identity test hook."""
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown latent variant {variant!r}")
    hidden = HiddenMap(alphabet.size, cfg.hidden_per_label)
    H = hidden.H
    gate = None
    ctx = 0
    d = m
    if variant == "ldcnf":
        ctx = cfg.context_window
        d_in = m * (2 * ctx + 1)
        gate = identity_gate(d_in) if identity else init_gate(cfg.gates, d_in, rng)
        d = gate.K
    state = rng.normal(0.0, 0.1, size=(H, d))
    bias = rng.normal(0.0, 0.1, size=H)
    return LatentModel(
        variant,
        hidden,
        state,
        np.zeros((H, H)),
        bias,
        alphabet,
        cfg.l2,
        gate=gate,
        compat=np.zeros((alphabet.size, H)) if variant == "hcrf" else None,
        window=cfg.hcrf_window if variant == "hcrf" else 1,
        context_window=ctx,
    )


def train_latent(data: Dataset, variant: str, config: TrainConfig | None = None) -> LatentModel:
    cfg = config or TrainConfig()
    if len(data) == 0:
        raise InputError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    init = init_latent(variant, data.alphabet, data.m, cfg, rng)
    if variant == "hcrf":
        windows, y = _hcrf_windows(init, data)

        def objective(v):
            return _hcrf_packed(init.from_vector(v), windows, y)

    else:
        batch = _pack_sequences(init, chunk_dataset(data, cfg.max_segment))

        def objective(v):
            return _ldcrf_packed(init.from_vector(v), batch)

    res = run_optimizer(objective, init.to_vector(), cfg, f"{variant}(r={cfg.hidden_per_label})")
    return init.from_vector(res.x)
