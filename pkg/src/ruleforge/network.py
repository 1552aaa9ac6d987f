"""The differentiable rule learner.

Layers compute relu(M x - d) / (1 - d) with M the row-softmax of a raw
trainable matrix, so every unit mixes its inputs with weights summing to one
and behaves as a soft conjunction; the output combines the last layer's units
with the product-complement fuzzy disjunction.  Training minimizes MSE against
substitution labels plus an optional weighted clustering term, with AdamW on
both the raw matrices and the centroids.  Rules are read off the product of
the stochastic layer matrices, one candidate rule per row.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ruleforge.clustering import CentroidSet, EmbeddingTable, cluster_grad, cluster_loss
from ruleforge.logic import Atom, LogicProgram, Rule, Var
from ruleforge.substitution import BodyAtomSpace


class TrainingDiverged(Exception):
    pass


@dataclass
class NetworkConfig:
    n_inputs: int
    widths: tuple[int, ...] = (16, 4)
    d_bias: float = 0.5
    rule_lr: float = 0.05
    centroid_lr: float = 0.5
    lam: float = 0.0
    epochs: int = 1000
    batch: int = 64
    seed: int = 0
    extract_threshold: float = 0.3
    weight_decay: float = 0.0
    leak: float = 0.0  # negative slope used while training; 0 keeps strict ReLU
    early_stop_mse: float = 1e-4
    early_stop_patience: int = 20

    def __post_init__(self) -> None:
        if not 0 < self.d_bias < 1:
            raise ValueError("d_bias must lie in (0, 1)")
        if not self.widths or self.widths[-1] < 1:
            raise ValueError("need at least one layer with at least one rule row")
        if not 0 < self.extract_threshold < 1:
            raise ValueError("extract_threshold must lie in (0, 1)")

    @property
    def m(self) -> int:
        return len(self.widths)


@dataclass
class NetworkParams:
    raw: list[np.ndarray]
    opt_m: list[np.ndarray] = field(default_factory=list)
    opt_v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @staticmethod
    def init(
        cfg: NetworkConfig,
        rng: np.random.Generator,
        pair_gain: float = 6.0,
        seed_rows: np.ndarray | None = None,
    ) -> "NetworkParams":
        """Sharp seeded init.

        A flat softmax start leaves every pre-activation below the bias and the
        strict ReLU then blocks all gradients, so each first-layer unit starts
        as a crisp conjunction of one to three inputs.  When ``seed_rows``
        (sampled positive substitution rows) are given, the conjunction is
        drawn from atoms that actually co-fire there, bottom-up style;
        otherwise it is drawn uniformly."""
        raw = []
        fan_in = cfg.n_inputs
        for layer, width in enumerate(cfg.widths):
            mat = rng.normal(0.0, 0.1, size=(width, fan_in))
            if pair_gain > 0:
                data_driven = layer == 0 and seed_rows is not None and len(seed_rows)
                for r in range(width):
                    # random seeds stay small conjunctions; triples only pay off
                    # when drawn from atoms that actually co-fire
                    k = min(1 + r % (3 if data_driven else 2), fan_in)
                    picks = None
                    if data_driven:
                        active = np.nonzero(seed_rows[rng.integers(len(seed_rows))])[0]
                        if active.size:
                            picks = rng.choice(active, size=min(k, active.size), replace=False)
                    if picks is None:
                        picks = rng.choice(fan_in, size=k, replace=False)
                    mat[r, picks] += pair_gain
            raw.append(mat)
            fan_in = width
        return NetworkParams(
            raw=raw,
            opt_m=[np.zeros_like(w) for w in raw],
            opt_v=[np.zeros_like(w) for w in raw],
        )

    def stochastic(self) -> list[np.ndarray]:
        return [row_softmax(w) for w in self.raw]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            raw=[w.copy() for w in self.raw],
            opt_m=[m.copy() for m in self.opt_m],
            opt_v=[v.copy() for v in self.opt_v],
            step=self.step,
        )


def row_softmax(raw: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift; each output row sums to one."""
    if not np.all(np.isfinite(raw)):
        raise ValueError("non-finite raw weights")
    shifted = raw - raw.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def fuzzy_or(z: np.ndarray) -> np.ndarray:
    """1 - prod(1 - z_u) along the last axis."""
    return 1.0 - np.prod(1.0 - z, axis=-1)


def forward_layers(x: np.ndarray, matrices: list[np.ndarray], d_bias: float) -> np.ndarray:
    """Forward through already-stochastic matrices; x is (batch, N) or (N,)."""
    z = np.atleast_2d(x)
    for mat in matrices:
        z = np.maximum(z @ mat.T - d_bias, 0.0) / (1.0 - d_bias)
    out = fuzzy_or(z)
    return out if x.ndim > 1 else float(out[0])


def forward(x: np.ndarray, params: NetworkParams, cfg: NetworkConfig):
    """Prediction in [0, 1]; also returns the per-layer activations for backward.

    A nonzero cfg.leak turns the hinge into a leaky one during training so that
    gradients reach conjunctions that are still below the bias; the default is
    the strict ReLU semantics."""
    mats = params.stochastic()
    z = np.atleast_2d(np.asarray(x, dtype=float))
    cache = {"mats": mats, "zs": [z], "pres": []}
    for mat in mats:
        pre = z @ mat.T - cfg.d_bias
        z = np.where(pre > 0.0, pre, cfg.leak * pre) / (1.0 - cfg.d_bias)
        cache["pres"].append(pre)
        cache["zs"].append(z)
    y_hat = fuzzy_or(z)
    return y_hat, cache


def _exclusive_products(one_minus: np.ndarray) -> np.ndarray:
    """prod over v != u of one_minus[:, v], via prefix/suffix products."""
    b, u = one_minus.shape
    prefix = np.ones((b, u))
    suffix = np.ones((b, u))
    np.cumprod(one_minus[:, :-1], axis=1, out=prefix[:, 1:])
    np.cumprod(one_minus[:, :0:-1], axis=1, out=suffix[:, -2::-1])
    return prefix * suffix


def mse(y_hat: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((y_hat - y) ** 2))


def loss(
    x: np.ndarray,
    y: np.ndarray,
    params: NetworkParams,
    cfg: NetworkConfig,
    table: EmbeddingTable | None = None,
    centroids: CentroidSet | None = None,
) -> float:
    """MSE plus lam * clustering loss (lam = 0 disables the clustering term)."""
    y_hat, _ = forward(x, params, cfg)
    total = mse(y_hat, y)
    if cfg.lam > 0 and table is not None and centroids is not None:
        total += cfg.lam * cluster_loss(table, centroids)
    return total


def backward(x: np.ndarray, y: np.ndarray, params: NetworkParams, cfg: NetworkConfig):
    """Exact reverse-mode gradients of the batch MSE w.r.t. the raw matrices."""
    y_hat, cache = forward(x, params, cfg)
    y = np.asarray(y, dtype=float)
    b = y_hat.shape[0]
    mats, zs, pres = cache["mats"], cache["zs"], cache["pres"]

    d_yhat = 2.0 * (y_hat - y) / b
    z_last = zs[-1]
    d_z = d_yhat[:, None] * _exclusive_products(1.0 - z_last)
    grads: list[np.ndarray] = [np.empty(0)] * len(mats)
    for i in range(len(mats) - 1, -1, -1):
        slope = np.where(pres[i] > 0.0, 1.0, cfg.leak)
        d_pre = d_z * slope / (1.0 - cfg.d_bias)
        grad_mat = d_pre.T @ zs[i]
        mat = mats[i]
        inner = np.sum(grad_mat * mat, axis=1, keepdims=True)
        grads[i] = mat * (grad_mat - inner)
        if i:
            d_z = d_pre @ mat
    return grads, y_hat


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adamw_step(
    value: np.ndarray,
    grad: np.ndarray,
    state: AdamWState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> np.ndarray:
    """Decoupled-weight-decay adaptive update; mutates state, returns new value."""
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    return value - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * value)


@dataclass
class ClusterContext:
    """Joint-training hook: owns the centroids and refreshes assignments."""

    table: EmbeddingTable
    centroids: CentroidSet
    refresh: object = None  # callable(CentroidSet) -> None, rebinds assignments/KB
    _state: AdamWState | None = None

    def step(self, lam: float, lr: float) -> float:
        value = cluster_loss(self.table, self.centroids)
        grad = lam * cluster_grad(self.table, self.centroids)
        if self._state is None:
            self._state = AdamWState(np.zeros_like(self.centroids.centers), np.zeros_like(self.centroids.centers))
        self.centroids.centers = adamw_step(self.centroids.centers, grad, self._state, lr)
        if self.refresh is not None:
            self.refresh(self.centroids)  # type: ignore[operator]
        return value


@dataclass
class TrainResult:
    params: NetworkParams
    history: list[tuple[int, float, float, float, float]]  # epoch, H, mse, cluster, acc
    stopped_early: bool = False


def train(
    params: NetworkParams,
    cfg: NetworkConfig,
    batch_fn,
    cluster: ClusterContext | None = None,
) -> TrainResult:
    """AdamW training against the joint loss.

    ``batch_fn(epoch, rng) -> (X, y)`` supplies each epoch's substitution rows.
    Stops early once the batch MSE stays under ``early_stop_mse`` for
    ``early_stop_patience`` consecutive epochs.
    """
    rng = np.random.default_rng(cfg.seed)
    states = [AdamWState(m, v, params.step) for m, v in zip(params.opt_m, params.opt_v)]
    history = []
    calm = 0
    stopped = False
    for epoch in range(cfg.epochs):
        x, y = batch_fn(epoch, rng)
        grads, y_hat = backward(x, y, params, cfg)
        batch_mse = mse(y_hat, np.asarray(y, dtype=float))
        if not np.isfinite(batch_mse):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
        for i, g in enumerate(grads):
            params.raw[i] = adamw_step(params.raw[i], g, states[i], cfg.rule_lr, weight_decay=cfg.weight_decay)
        c_loss = 0.0
        if cluster is not None and cfg.lam > 0:
            c_loss = cluster.step(cfg.lam, cfg.centroid_lr)
        acc = float(np.mean((y_hat >= 0.5) == (np.asarray(y) >= 0.5)))
        history.append((epoch, batch_mse + cfg.lam * c_loss, batch_mse, c_loss, acc))
        calm = calm + 1 if batch_mse < cfg.early_stop_mse else 0
        if calm >= cfg.early_stop_patience:
            stopped = True
            break
    params.opt_m = [s.m for s in states]
    params.opt_v = [s.v for s in states]
    params.step = states[0].step if states else 0
    return TrainResult(params=params, history=history, stopped_early=stopped)


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


def program_tensor(params: NetworkParams) -> np.ndarray:
    """Product of the stochastic layer matrices: (rule rows, N)."""
    mats = params.stochastic()
    out = mats[0]
    for mat in mats[1:]:
        out = mat @ out
    return out


def canonical_rule(head: Atom, body: tuple[Atom, ...]) -> Rule:
    """Dedup form: auxiliary variables renumbered to the lexicographically
    smallest consistent labeling, body atoms sorted."""
    arity = head.pred.arity
    body = tuple(dict.fromkeys(body))
    aux = sorted({v for a in body for v in a.variables() if v > arity})

    def relabel(mapping: dict[int, int]) -> tuple:
        out = []
        for atom in body:
            terms = tuple(mapping.get(t.index, t.index) for t in atom.terms)
            out.append((atom.pred.name, terms))
        return tuple(sorted(out))

    best = None
    best_perm = None
    for perm in itertools.permutations(range(arity + 1, arity + 1 + len(aux))):
        mapping = dict(zip(aux, perm))
        key = relabel(mapping)
        if best is None or key < best:
            best = key
            best_perm = mapping
    pred_by_name = {a.pred.name: a.pred for a in body}
    new_body = tuple(
        Atom(pred_by_name[name], tuple(Var(i) for i in terms)) for name, terms in best or ()
    )
    return Rule(head, new_body)


@dataclass
class ExtractionResult:
    program: LogicProgram
    row_weights: np.ndarray
    empty_rows: int
    bodies: list[tuple[Atom, ...]]


def extract_detailed(params: NetworkParams, space: BodyAtomSpace, head: Atom, cfg: NetworkConfig) -> ExtractionResult:
    tensor = program_tensor(params)
    rules = []
    bodies = []
    empty = 0
    seen = set()
    for row in tensor:
        picked = tuple(space.atoms[j] for j in np.nonzero(row > cfg.extract_threshold)[0])
        if not picked:
            empty += 1
            continue
        rule = canonical_rule(head, picked)
        key = (rule.head.pred.name, tuple((a.pred.name, a.variables()) for a in rule.body))
        if key in seen:
            continue
        seen.add(key)
        rules.append(rule)
        bodies.append(picked)
    return ExtractionResult(program=LogicProgram.of(rules), row_weights=tensor, empty_rows=empty, bodies=bodies)


def extract_rules(params: NetworkParams, space: BodyAtomSpace, head: Atom, cfg: NetworkConfig) -> LogicProgram:
    """Rules from the logic-program tensor: per row, atoms above the extraction
    threshold form one body; duplicates collapse up to variable renaming."""
    return extract_detailed(params, space, head, cfg).program
