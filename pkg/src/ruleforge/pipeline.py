"""End-to-end training runs: dataset -> substitutions -> network -> rules -> scores.

Three modes share the trainer:

* symbolic: constants embed as themselves (identity one-hots), no clustering;
* relational_image: constants carry class-bearing embeddings, clustering is
  trained jointly, and scoring happens over the latent (cluster-level) facts;
* instance: bags of objects with a boolean label; variables are constrained to
  clusters and bodies are placeholder atoms over cluster-presence bits.

Extraction sweeps a threshold grid (each sweep is one tensor read-off), pools
the candidate rules, keeps those with substitution precision 1 on the training
data, and reports recall on the evaluation split with training positives
seeded into the background.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ruleforge import datasets
from ruleforge.clustering import (
    CentroidSet,
    EmbeddingTable,
    hard_assign_table,
    init_centroids,
)
from ruleforge.datasets import (
    KandinskyDataset,
    SymbolicTask,
    TaskSpec,
    FeatureEncoder,
    encode_object,
    gen_task,
)
from ruleforge.logic import (
    Atom,
    Const,
    ConstantTable,
    FactBase,
    LogicProgram,
    PredicateKind,
    PredicateSymbol,
    Rule,
    Var,
    evaluate_rules,
    format_rule,
    rule_precision,
)
from ruleforge.network import (
    ClusterContext,
    NetworkConfig,
    NetworkParams,
    canonical_rule,
    extract_detailed,
    forward,
    train,
)
from ruleforge.substitution import (
    RELATIONS_UNDEFINED,
    BodyAtomSpace,
    build_latent_kb,
    enumerate_body_atoms,
    instance_rows,
    make_training_batch,
    sample_substitutions,
)

DEFAULT_THRESHOLD_GRID = (0.45, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.12, 0.1, 0.08, 0.06, 0.05)


@dataclass
class RunConfig:
    task: str
    mode: str = "symbolic"  # symbolic | relational_image | instance
    d: int = 2
    k: int = 10
    widths: tuple[int, ...] = (16,)
    d_bias: float = 0.5
    rule_lr: float = 0.05
    centroid_lr: float = 0.5
    alpha: float = 20.0
    lam: float = 0.0
    epochs: int = 1200
    batch: int = 64
    runs: int = 10
    seed: int = 0
    threshold: float = 0.3
    threshold_grid: tuple[float, ...] = DEFAULT_THRESHOLD_GRID
    noise_scale: float = 0.01
    weight_decay: float = 0.0
    min_rule_precision: float = 1.0
    random_centroids: bool = False  # skip k-means++ seeding (ablation arm)
    budget_seconds: float = 300.0
    keep_all: bool = False

    def network_config(self, n_inputs: int, run_seed: int) -> NetworkConfig:
        return NetworkConfig(
            n_inputs=n_inputs,
            widths=self.widths,
            d_bias=self.d_bias,
            rule_lr=self.rule_lr,
            centroid_lr=self.centroid_lr,
            lam=self.lam,
            epochs=self.epochs,
            batch=self.batch,
            seed=run_seed,
            extract_threshold=self.threshold,
            weight_decay=self.weight_decay,
        )


# tuned per task: variable count from the target rules, widths sized to the
# number of rules, lower thresholds where bodies carry three or more atoms
TASK_OVERRIDES: dict[str, dict] = {
    "predecessor": dict(d=2),
    "even": dict(d=3, epochs=2500, batch=192, widths=(24,)),
    "odd": dict(d=3, epochs=2500, batch=192, widths=(24,)),
    "lessthan": dict(d=3, epochs=2000, batch=128),
    "fizz": dict(d=3, epochs=4000, batch=256),
    "buzz": dict(d=3, epochs=5000, batch=256),
    "member": dict(d=3, epochs=2000, batch=128),
    "length": dict(d=2),
    "son": dict(d=2),
    "grandparent": dict(d=3, epochs=1500, batch=128),
    # the bundled splits hold out target facts while inverse/support relations
    # stay in the background, so a complete rule's training precision equals
    # the split ratio; the evaluation-side precision-1 requirement still holds
    "husband": dict(d=2, epochs=800, batch=128, min_rule_precision=0.75),
    "uncle": dict(d=3, epochs=1500, batch=128, widths=(24,), min_rule_precision=0.75),
    "relatedness": dict(d=3, epochs=2500, batch=128),
    "father": dict(d=2),
    "undirected_edge": dict(d=2),
    "adjacent_to_red": dict(d=2),
    "two_children": dict(d=3, epochs=1500, batch=128),
    "graph_coloring": dict(d=3, epochs=2500, batch=128),
    "connectedness": dict(d=3, epochs=1500, batch=128),
    "cyclic": dict(d=2),
    "mnist_sequence_odd_index": dict(
        mode="relational_image", d=2, k=10, lam=1.0, epochs=2500, batch=128,
        centroid_lr=0.5, alpha=20.0, weight_decay=0.03,
        threshold_grid=(0.4, 0.3, 0.25, 0.2, 0.15, 0.12, 0.1),
    ),
    "mnist_sequence_even_index": dict(
        mode="relational_image", d=2, k=10, lam=1.0, epochs=2500, batch=128,
        centroid_lr=0.5, alpha=20.0, weight_decay=0.03,
        threshold_grid=(0.4, 0.3, 0.25, 0.2, 0.15, 0.12, 0.1, 0.06, 0.04),
    ),
    "kandinsky_one_red": dict(
        mode="instance", k=10, lam=4.0, epochs=2000, rule_lr=0.05, centroid_lr=0.5,
        alpha=20.0, widths=(48,), keep_all=True, noise_scale=0.02,
    ),
    "kandinsky_one_triangle": dict(
        mode="instance", k=10, lam=4.0, epochs=2000, rule_lr=0.05, centroid_lr=0.5,
        alpha=20.0, widths=(48,), keep_all=True, noise_scale=0.02,
    ),
    "kandinsky_two_pair": dict(
        mode="instance", k=10, lam=4.0, epochs=2000, rule_lr=0.5, centroid_lr=0.1,
        alpha=20.0, widths=(48,), keep_all=True, noise_scale=0.02,
    ),
}


def default_config(task: str, **kwargs) -> RunConfig:
    cfg = RunConfig(task=task)
    cfg = replace(cfg, **TASK_OVERRIDES.get(task, {}))
    return replace(cfg, **kwargs) if kwargs else cfg


def seeded_eval_fb(task: SymbolicTask) -> FactBase:
    """Evaluation fact base with the training positives seeded as background."""
    fb = task.eval
    return FactBase(
        background=set(fb.background) | set(task.train.positives),
        positives=set(fb.positives),
        negatives=set(fb.negatives),
        constants=fb.constants,
        target=fb.target,
        predicates=dict(fb.predicates),
    )


# ---------------------------------------------------------------------------
# rule post-processing
# ---------------------------------------------------------------------------


def sweep_candidates(params: NetworkParams, space: BodyAtomSpace, head: Atom, cfg: RunConfig,
                     net_cfg: NetworkConfig) -> list[Rule]:
    """Union of extractions over the threshold grid, deduped up to renaming."""
    grid = tuple(dict.fromkeys((cfg.threshold, *cfg.threshold_grid)))
    seen = {}
    for thr in grid:
        detail = extract_detailed(params, space, head, replace_threshold(net_cfg, thr))
        for rule in detail.program.rules:
            key = rule_key(rule)
            seen.setdefault(key, rule)
    return list(seen.values())


def replace_threshold(net_cfg: NetworkConfig, thr: float) -> NetworkConfig:
    from dataclasses import replace as dc_replace

    return dc_replace(net_cfg, extract_threshold=thr)


def rule_key(rule: Rule) -> tuple:
    canon = canonical_rule(rule.head, rule.body)
    return (canon.head.pred.name, tuple((a.pred.name, a.variables()) for a in canon.body))


def filter_precision_one(rules: list[Rule], train_fb: FactBase, min_precision: float = 1.0) -> list[Rule]:
    kept = []
    for rule in rules:
        num, den = rule_precision(rule, train_fb)
        if den > 0 and num / den >= min_precision:
            kept.append(rule)
    return kept


def contains_rule(program: LogicProgram, rule: Rule) -> bool:
    want = rule_key(rule)
    return any(rule_key(r) == want for r in program.rules)


# ---------------------------------------------------------------------------
# outcomes
# ---------------------------------------------------------------------------


@dataclass
class RunOutcome:
    task: str
    seed: int
    program: LogicProgram
    precision: float | None
    recall: float
    history: list
    elapsed: float
    n_candidates: int = 0
    accuracy: float | None = None
    constrained_bodies: list = field(default_factory=list)
    assignment: dict[int, int] = field(default_factory=dict)
    centroids: CentroidSet | None = None
    latent_fb: FactBase | None = None
    params: NetworkParams | None = None
    space: BodyAtomSpace | None = None
    instance_ctx: "InstanceContext | None" = None

    def rules_text(self, constants: ConstantTable | None = None) -> str:
        return "\n".join(format_rule(r, None) for r in self.program.rules) + ("\n" if self.program.rules else "")


# ---------------------------------------------------------------------------
# symbolic mode
# ---------------------------------------------------------------------------


def run_symbolic_once(task: SymbolicTask, cfg: RunConfig, run_seed: int) -> RunOutcome:
    t0 = time.time()
    fb = task.train
    target = fb.target
    assert target is not None
    space = enumerate_body_atoms(list(fb.predicates.values()), cfg.d, target=target)
    kb = build_latent_kb(fb, {i: i for i in fb.constants.ids()}, len(fb.constants))
    cluster_of = np.arange(len(fb.constants))
    net_cfg = cfg.network_config(space.n, run_seed)
    init_rng = np.random.default_rng(run_seed)
    warm = sample_substitutions(fb, cfg.d, target, max(cfg.batch, 64), init_rng)
    warm_x, _ = make_training_batch(warm, space, kb, cluster_of)
    params = NetworkParams.init(net_cfg, init_rng, seed_rows=warm_x[: warm.batch])

    def batch_fn(epoch: int, rng: np.random.Generator):
        sub = sample_substitutions(fb, cfg.d, target, cfg.batch, rng)
        return make_training_batch(sub, space, kb, cluster_of)

    result = train(params, net_cfg, batch_fn)
    head = Atom(target, tuple(Var(i + 1) for i in range(target.arity)))
    candidates = sweep_candidates(params, space, head, cfg, net_cfg)
    rules = candidates if cfg.keep_all else filter_precision_one(candidates, fb, cfg.min_rule_precision)
    program = LogicProgram.of(rules)
    eval_fb = seeded_eval_fb(task)
    if program.rules:
        metrics = evaluate_rules(program, eval_fb, set(eval_fb.positives))
        precision, recall = metrics.precision, metrics.recall
    else:
        precision, recall = None, 0.0
    return RunOutcome(
        task=task.name, seed=run_seed, program=program, precision=precision, recall=recall,
        history=result.history, elapsed=time.time() - t0, n_candidates=len(candidates),
        params=params, space=space,
    )


# ---------------------------------------------------------------------------
# relational-image mode (clustered constants)
# ---------------------------------------------------------------------------


def class_embeddings(task: SymbolicTask, cfg: RunConfig, run_seed: int) -> EmbeddingTable:
    """Toy stand-in for a frozen image encoder: one-hot of the latent class plus noise."""
    labels = task.embedding_labels or {}
    rng_base = run_seed * 100003
    vectors = {}
    for cid in task.train.constants.ids():
        vec = np.zeros(cfg.k)
        vec[labels[cid] % cfg.k] = 1.0
        noise = np.random.default_rng((rng_base + cid) % (2**63)).normal(0, cfg.noise_scale, cfg.k)
        vectors[cid] = vec + noise
    return EmbeddingTable(vectors)


def latent_factbase(fb: FactBase, assignment: dict[int, int], n_clusters: int) -> FactBase:
    """Project a fact base onto cluster-level constants.

    Positives map through the assignment; every projected fact (including the
    projected positives) lands in the background, which realizes the seeding
    convention for recursive targets at the latent level.
    """
    table = ConstantTable()
    for k in range(n_clusters):
        table.intern(f"k{k}")
    def project(atom: Atom) -> Atom:
        return Atom(atom.pred, tuple(Const(assignment[t.id]) for t in atom.terms))

    background = {project(a) for a in fb.background} | {project(a) for a in fb.positives}
    positives = {project(a) for a in fb.positives}
    return FactBase(
        background=background,
        positives=positives,
        negatives=set(),
        constants=table,
        target=fb.target,
        predicates=dict(fb.predicates),
    )


def run_relational_once(task: SymbolicTask, cfg: RunConfig, run_seed: int) -> RunOutcome:
    t0 = time.time()
    fb = task.train
    target = fb.target
    assert target is not None
    table = class_embeddings(task, cfg, run_seed)
    centroids = init_centroids(table, cfg.k, seed=run_seed, alpha=cfg.alpha)
    space = enumerate_body_atoms(list(fb.predicates.values()), cfg.d, target=target)

    state = {"assignment": hard_assign_table(table, centroids)}
    state["kb"] = build_latent_kb(fb, state["assignment"], cfg.k)
    state["cluster_of"] = np.array([state["assignment"][i] for i in fb.constants.ids()])

    def refresh(cents: CentroidSet) -> None:
        state["assignment"] = hard_assign_table(table, cents)
        state["kb"] = build_latent_kb(fb, state["assignment"], cfg.k)
        state["cluster_of"] = np.array([state["assignment"][i] for i in fb.constants.ids()])

    net_cfg = cfg.network_config(space.n, run_seed)
    params = NetworkParams.init(net_cfg, np.random.default_rng(run_seed))

    def batch_fn(epoch: int, rng: np.random.Generator):
        sub = sample_substitutions(fb, cfg.d, target, cfg.batch, rng)
        return make_training_batch(sub, space, kb=state["kb"], cluster_of=state["cluster_of"])

    ctx = ClusterContext(table=table, centroids=centroids, refresh=refresh)
    result = train(params, net_cfg, batch_fn, cluster=ctx)

    head = Atom(target, tuple(Var(i + 1) for i in range(target.arity)))
    candidates = sweep_candidates(params, space, head, cfg, net_cfg)
    latent_fb = latent_factbase(fb, state["assignment"], cfg.k)
    rules = filter_precision_one(candidates, latent_fb)
    program = LogicProgram.of(rules)
    if program.rules:
        metrics = evaluate_rules(program, latent_fb, set(latent_fb.positives))
        precision, recall = metrics.precision, metrics.recall
    else:
        precision, recall = None, 0.0
    return RunOutcome(
        task=task.name, seed=run_seed, program=program, precision=precision, recall=recall,
        history=result.history, elapsed=time.time() - t0, n_candidates=len(candidates),
        assignment=state["assignment"], centroids=centroids, latent_fb=latent_fb,
        params=params, space=space,
    )


# ---------------------------------------------------------------------------
# instance mode (Kandinsky)
# ---------------------------------------------------------------------------


@dataclass
class InstanceContext:
    """Encoded dataset plus the final clustering of one instance-mode run."""

    dataset: KandinskyDataset
    encoder: FeatureEncoder
    table: EmbeddingTable  # training objects
    object_owner: list[int]  # object id -> training instance index
    centroids: CentroidSet
    assignment: dict[int, int]
    cluster_members: dict[int, list[int]]

    def presence(self, instances, vectors_by_instance) -> np.ndarray:
        pres = np.zeros((len(instances), self.centroids.k), dtype=bool)
        for i, vecs in enumerate(vectors_by_instance):
            for v in vecs:
                d2 = ((self.centroids.centers - v) ** 2).sum(axis=1)
                pres[i, int(np.argmin(d2))] = True
        return pres


def encode_dataset(ds: KandinskyDataset, cfg: RunConfig, run_seed: int):
    enc = FeatureEncoder(noise_scale=cfg.noise_scale)
    vectors = {}
    owner = []
    per_train_instance = []
    oid = 0
    for idx, inst in enumerate(ds.train):
        vecs = []
        for obj in inst.objects:
            v = encode_object(obj, enc, seed=(run_seed * 1000003 + oid) % (2**63))
            vectors[oid] = v
            owner.append(idx)
            vecs.append(v)
            oid += 1
        per_train_instance.append(vecs)
    per_test_instance = []
    for jdx, inst in enumerate(ds.test):
        vecs = [
            encode_object(obj, enc, seed=(run_seed * 2000003 + 1_000_000 + jdx * 16 + t) % (2**63))
            for t, obj in enumerate(inst.objects)
        ]
        per_test_instance.append(vecs)
    return enc, EmbeddingTable(vectors), owner, per_train_instance, per_test_instance


def run_instance_once(ds: KandinskyDataset, cfg: RunConfig, run_seed: int) -> RunOutcome:
    t0 = time.time()
    enc, table, owner, train_vecs, test_vecs = encode_dataset(ds, cfg, run_seed)
    if cfg.random_centroids:
        mat, _ = table.matrix()
        rng0 = np.random.default_rng(run_seed)
        centers = rng0.uniform(mat.min(axis=0), mat.max(axis=0), size=(cfg.k, table.dim))
        centroids = CentroidSet(centers, alpha=cfg.alpha)
    else:
        centroids = init_centroids(table, cfg.k, seed=run_seed, alpha=cfg.alpha)
    # order centroids by initial membership so the space's dropped singleton
    # (the -1 in its size) belongs to the emptiest cluster
    counts = np.zeros(cfg.k, dtype=int)
    for cluster in hard_assign_table(table, centroids).values():
        counts[cluster] += 1
    centroids.centers = centroids.centers[np.argsort(-counts, kind="stable")]
    space = enumerate_body_atoms([], cfg.k, mode=RELATIONS_UNDEFINED)
    y_train = np.array([1.0 if inst.label else 0.0 for inst in ds.train])

    state: dict = {}

    def refresh(cents: CentroidSet) -> None:
        assignment = hard_assign_table(table, cents)
        pres = np.zeros((len(ds.train), cfg.k), dtype=bool)
        for oid, cluster in assignment.items():
            pres[owner[oid], cluster] = True
        state["assignment"] = assignment
        state["presence"] = pres
        state["x"] = instance_rows(pres, space)

    refresh(centroids)
    net_cfg = cfg.network_config(space.n, run_seed)
    params = NetworkParams.init(net_cfg, np.random.default_rng(run_seed))

    def batch_fn(epoch: int, rng: np.random.Generator):
        return state["x"], y_train

    ctx = ClusterContext(table=table, centroids=centroids, refresh=refresh)
    result = train(params, net_cfg, batch_fn, cluster=ctx)

    # classification accuracy on the held-out instances under the final clustering
    members: dict[int, list[int]] = {}
    for oid, cluster in state["assignment"].items():
        members.setdefault(cluster, []).append(oid)
    ictx = InstanceContext(
        dataset=ds, encoder=enc, table=table, object_owner=owner,
        centroids=centroids, assignment=state["assignment"], cluster_members=members,
    )
    test_pres = ictx.presence(ds.test, test_vecs)
    x_test = instance_rows(test_pres, space)
    y_test = np.array([1.0 if inst.label else 0.0 for inst in ds.test])
    y_hat, _ = forward(x_test, params, net_cfg)
    accuracy = float(np.mean((y_hat >= 0.5) == (y_test >= 0.5)))

    # candidate bodies: union over the threshold grid, support > 0 only
    support = state["x"].sum(axis=0)
    head = Atom(PredicateSymbol("positive", 1, PredicateKind.TARGET), (Var(1),))
    seen = {}
    for thr in dict.fromkeys((cfg.threshold, *cfg.threshold_grid)):
        detail = extract_detailed(params, space, head, replace_threshold(net_cfg, thr))
        for body in detail.bodies:
            if all(support[space.atoms.index(a)] > 0 for a in body):
                key = tuple(sorted(a.pred.name for a in body))
                seen.setdefault(key, body)
    bodies = list(seen.values())
    return RunOutcome(
        task=ds.name, seed=run_seed, program=LogicProgram.of([]), precision=None,
        recall=0.0, history=result.history, elapsed=time.time() - t0,
        n_candidates=len(bodies), accuracy=accuracy, constrained_bodies=bodies,
        assignment=state["assignment"], centroids=centroids,
        params=params, space=space, instance_ctx=ictx,
    )


# ---------------------------------------------------------------------------
# best-of-R driver
# ---------------------------------------------------------------------------


@dataclass
class BestOfResult:
    best: RunOutcome
    outcomes: list[RunOutcome]
    elapsed: float
    succeeded: bool


def run_once(task_obj, cfg: RunConfig, run_seed: int) -> RunOutcome:
    if cfg.mode == "symbolic":
        return run_symbolic_once(task_obj, cfg, run_seed)
    if cfg.mode == "relational_image":
        return run_relational_once(task_obj, cfg, run_seed)
    if cfg.mode == "instance":
        return run_instance_once(task_obj, cfg, run_seed)
    raise ValueError(f"unknown mode {cfg.mode!r}")


def symbolic_success(outcome: RunOutcome) -> bool:
    return outcome.precision == 1.0 and outcome.recall == 1.0


def partial_success(expected: LogicProgram):
    def check(outcome: RunOutcome) -> bool:
        return (
            outcome.precision == 1.0
            and 0.0 < outcome.recall < 1.0
            and all(contains_rule(outcome.program, r) for r in expected.rules)
        )

    return check


def best_of(task_obj, cfg: RunConfig, success=symbolic_success, rank=None) -> BestOfResult:
    """Run up to cfg.runs seeded attempts, stopping early on success.

    ``rank`` orders outcomes (higher better) for reporting when nothing
    succeeds; defaults to evaluation recall.
    """
    rank = rank or (lambda o: (o.recall if o.precision == 1.0 else -1.0))
    t0 = time.time()
    outcomes = []
    best = None
    succeeded = False
    for i in range(cfg.runs):
        outcome = run_once(task_obj, cfg, run_seed=cfg.seed + i)
        outcomes.append(outcome)
        if success(outcome):
            best = outcome
            succeeded = True
            break
        if best is None or rank(outcome) > rank(best):
            best = outcome
        if time.time() - t0 > cfg.budget_seconds:
            break
    assert best is not None
    return BestOfResult(best=best, outcomes=outcomes, elapsed=time.time() - t0, succeeded=succeeded)


def load_task(name: str, seed: int = 0):
    if name in datasets.KANDINSKY_TASKS:
        return gen_task(TaskSpec(name, seed=seed))
    return gen_task(TaskSpec(name))
