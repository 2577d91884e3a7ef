"""Training and evaluation harness.

One training run: (optionally re-)embed products, split nodes, complete
biased financial features, run message passing, score each node with its
domain's classifier head, and minimize

    total = clf + kl_weight * kl + dist_weight * dist

with full-batch Adam. Zero-weighted terms are still evaluated for reporting
but never enter the tape, so their gradient contribution is exactly nothing.
Model selection is by validation F1 (ties: validation AUC, then the earlier
epoch); reported metrics come from the test split at the selected epoch.
Monte Carlo evaluation repeats runs over a seed list and aggregates
mean +/- sample std.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import completion as cpl
from . import embedding as emb
from . import message_passing as mp
from .autodiff import Tensor
from .centrality import eigenvector_centrality
from .metrics import DegenerateLabels, auc_score, f1_score
from .supply import (
    BUSINESS_DIM,
    EMBED_DIM,
    FEATURE_DIM,
    FINANCIAL_DIM,
    CBGraph,
    SupplyGraph,
    build_cb_graph,
    extract_product_subgraphs,
)

_HEAD_SLOPE = 0.01

SPLIT_GRID = [(5, 1, 4), (5, 4, 1), (5, 2, 3), (5, 3, 2), (6, 2, 2),
              (6, 1, 3), (6, 3, 1), (7, 2, 1), (8, 1, 1), (7, 1, 2)]
K_GRID = list(range(7))
WEIGHT_GRID = [round(0.1 * i, 1) for i in range(11)]


class SplitError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, seed: int, epoch: int):
        super().__init__(f"non-finite loss at seed={seed}, epoch={epoch}")
        self.seed = seed
        self.epoch = epoch


@dataclass
class TrainConfig:
    kl_weight: float = 0.0
    dist_weight: float = 0.1
    completion_steps: int = 2
    lr: float = 3e-2
    epochs: int = 300
    n_runs: int = 10
    split: tuple[float, float, float] = (7, 1, 2)
    rounds: int = 2
    embed_dim: int = EMBED_DIM
    hidden_dim: int = 64
    attn_dim: int = 16
    table_dim: int = 8
    seed: int = 1
    seeds: tuple[int, ...] | None = None
    gee_mode: str = "one-shot"
    no_centrality: bool = False
    symmetric_neighbors: bool = False
    late_calibration: bool = True
    partition_conv: bool = False
    freeze_gap: bool = False
    project_gap: bool = False
    jobs: int = 1

    def validate(self) -> None:
        if self.kl_weight < 0 or self.dist_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.completion_steps < 0:
            raise ValueError("completion_steps must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1 or self.n_runs < 1 or self.rounds < 1 or self.jobs < 1:
            raise ValueError("epochs, n_runs, rounds and jobs must be at least 1")
        if len(self.split) != 3 or any(r < 0 for r in self.split) or sum(self.split) <= 0:
            raise ValueError(f"bad split ratio {self.split}")
        if self.gee_mode not in ("one-shot", "joint"):
            raise ValueError(f"unknown gee_mode {self.gee_mode!r}")

    def resolve_seeds(self) -> list[int]:
        if self.seeds:
            return list(self.seeds)
        return [self.seed + i for i in range(self.n_runs)]

    def to_dict(self) -> dict:
        return {
            "kl_weight": self.kl_weight,
            "dist_weight": self.dist_weight,
            "completion_steps": self.completion_steps,
            "lr": self.lr,
            "epochs": self.epochs,
            "n_runs": self.n_runs,
            "split": list(self.split),
            "rounds": self.rounds,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "attn_dim": self.attn_dim,
            "table_dim": self.table_dim,
            "seed": self.seed,
            "seeds": self.resolve_seeds(),
            "gee_mode": self.gee_mode,
            "no_centrality": self.no_centrality,
            "symmetric_neighbors": self.symmetric_neighbors,
            "late_calibration": self.late_calibration,
            "partition_conv": self.partition_conv,
            "freeze_gap": self.freeze_gap,
            "project_gap": self.project_gap,
            "jobs": self.jobs,
        }


def split_dataset(n: int, ratio, seed: int):
    """Seeded uniform partition with largest-remainder rounding of the ratio.

    Raises SplitError when any part would be empty.
    """
    ratio = np.asarray(ratio, dtype=np.float64)
    if ratio.shape != (3,) or np.any(ratio < 0) or ratio.sum() <= 0:
        raise SplitError(f"bad split ratio {ratio.tolist()}")
    quotas = n * ratio / ratio.sum()
    sizes = np.floor(quotas).astype(int)
    remainder = n - int(sizes.sum())
    order = np.argsort(-(quotas - sizes), kind="stable")
    for i in range(remainder):
        sizes[order[i]] += 1
    for name, size in zip(("train", "val", "test"), sizes):
        if size == 0:
            raise SplitError(f"{name} split is empty for ratio {ratio.tolist()}")
    perm = np.random.default_rng(seed).permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    return perm[:a], perm[a:b], perm[b:]


# ---------------------------------------------------------------------------
# classifier heads


@dataclass
class Head:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def logits(self, hidden: Tensor) -> Tensor:
        inner = ad.leaky_relu(ad.add(ad.matmul(hidden, self.w1), self.b1), _HEAD_SLOPE)
        return ad.add(ad.matmul(inner, self.w2), self.b2)

    def tensors(self):
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class HeadParams:
    """Independent classifier heads per domain (0 = complete, 1 = biased)."""

    domains: list[Head]

    @classmethod
    def init(cls, rng: np.random.Generator, hidden_dim: int):
        def head():
            return Head(
                w1=Tensor(ad.glorot(rng, hidden_dim, hidden_dim), requires_grad=True),
                b1=Tensor(np.zeros(hidden_dim), requires_grad=True),
                w2=Tensor(ad.glorot(rng, hidden_dim, 2), requires_grad=True),
                b2=Tensor(np.zeros(2), requires_grad=True),
            )
        return cls(domains=[head(), head()])

    def tensors(self):
        return [t for head in self.domains for t in head.tensors()]


def classify_two_head(hidden: Tensor, biased: np.ndarray, heads: HeadParams):
    """Score every node with its domain head.

    Returns (n x 2 logits, distillation loss): the mean KL from the complete
    head's distribution (gradient-stopped teacher) to the biased head's
    distribution, evaluated on biased-node states; zero without biased nodes.
    """
    biased = np.asarray(biased, dtype=bool)
    comp_idx = np.flatnonzero(~biased)
    bias_idx = np.flatnonzero(biased)
    logits_complete = heads.domains[0].logits(hidden)
    logits_biased = heads.domains[1].logits(hidden)
    out = Tensor(np.zeros((len(biased), 2)))
    if comp_idx.size:
        out = ad.scatter_rows(out, comp_idx, ad.rows(logits_complete, comp_idx))
    if bias_idx.size:
        out = ad.scatter_rows(out, bias_idx, ad.rows(logits_biased, bias_idx))
    if bias_idx.size:
        teacher = ad.softmax_rows(ad.stop_gradient(ad.rows(logits_complete, bias_idx)))
        student = ad.softmax_rows(ad.rows(logits_biased, bias_idx))
        kl = ad.kl_divergence_rows(teacher, student)
    else:
        kl = Tensor(0.0)
    return out, kl


# ---------------------------------------------------------------------------
# losses


@dataclass
class LossBreakdown:
    clf: float
    kl: float
    dist: float
    total: float


def total_loss(clf: Tensor, kl: Tensor, dist: Tensor, kl_weight: float,
               dist_weight: float):
    """Weighted sum on the tape; zero-weighted terms are left off the tape so
    they contribute no gradients. Raises on non-finite parts."""
    parts = {"clf": clf.item(), "kl": kl.item(), "dist": dist.item()}
    for name, value in parts.items():
        if not np.isfinite(value):
            raise ValueError(f"non-finite {name} loss: {value}")
    total = clf
    if kl_weight > 0:
        total = ad.add(total, ad.mul(Tensor(kl_weight), kl))
    if dist_weight > 0:
        total = ad.add(total, ad.mul(Tensor(dist_weight), dist))
    breakdown = LossBreakdown(parts["clf"], parts["kl"], parts["dist"], total.item())
    return total, breakdown


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunResult:
    seed: int
    f1: float
    auc: float


@dataclass
class PartitionConv:
    """Optional per-partition linear maps applied before completion."""

    w_embed: Tensor
    w_business: Tensor
    w_financial: Tensor

    @classmethod
    def init(cls):
        return cls(
            w_embed=Tensor(np.eye(EMBED_DIM), requires_grad=True),
            w_business=Tensor(np.eye(BUSINESS_DIM), requires_grad=True),
            w_financial=Tensor(np.eye(FINANCIAL_DIM), requires_grad=True),
        )

    def tensors(self):
        return [self.w_embed, self.w_business, self.w_financial]


def _safe_auc(scores, labels) -> float:
    try:
        return auc_score(scores, labels)
    except DegenerateLabels:
        return 0.5


def train_once(cbg: CBGraph, cfg: TrainConfig, seed: int, gee_ctx=None,
               loss_log: list | None = None, _omit_terms: tuple = ()):
    """One seeded training run on a CBGraph; returns the test-split RunResult.

    ``gee_ctx`` is a (SubgraphBatch, EncoderParams) pair for joint embedding
    training; without it the stored embedding rows are used as constants.
    """
    cfg.validate()
    train_idx, val_idx, test_idx = split_dataset(cbg.n, cfg.split, seed)
    rng = np.random.default_rng([seed, 101])
    biased = cbg.cb_label.astype(bool)
    weights = eigenvector_centrality(cbg.n, cbg.edges).values
    obs_dim = EMBED_DIM + BUSINESS_DIM

    ccafc = cpl.CompletionParams.init(rng, obs_dim, FINANCIAL_DIM, cfg.attn_dim)
    dcamp = mp.PassingParams.init(rng, FEATURE_DIM, cfg.hidden_dim, cfg.attn_dim,
                                  cfg.rounds)
    heads = HeadParams.init(rng, cfg.hidden_dim)
    conv = PartitionConv.init() if cfg.partition_conv else None

    trainables = ccafc.tensors() + dcamp.tensors(cfg.project_gap) + heads.tensors()
    if conv is not None:
        trainables += conv.tensors()
    if gee_ctx is not None:
        batch, encoder = gee_ctx
        trainables += encoder.tensors()

    # masked financial rows must enter the model as neutral zeros
    fin_start = cbg.x_financial * cbg.financial_observed[:, None]
    x_embed_const = Tensor(cbg.x_embed)
    x_business_const = Tensor(cbg.x_business)
    fin_const = Tensor(fin_start)
    y = cbg.risk.astype(np.float64)

    optimizer = ad.Adam(trainables, lr=cfg.lr)
    best_key = None
    best = None
    for epoch in range(cfg.epochs):
        xe = emb.encode_batch(batch, encoder) if gee_ctx is not None else x_embed_const
        xb, xf = x_business_const, fin_const
        if conv is not None:
            xe = ad.matmul(xe, conv.w_embed)
            xb = ad.matmul(xb, conv.w_business)
            xf = ad.matmul(xf, conv.w_financial)
        x_obs = ad.concat([xe, xb], axis=1)
        x_unobs, gap, trace = cpl.complete_features(
            cbg.edges, x_obs, xf, biased, weights, ccafc,
            cfg.completion_steps, late_calibration=cfg.late_calibration,
            drop_gap=cfg.no_centrality)
        if "dist" in _omit_terms:
            dist = Tensor(0.0)
        else:
            dist = cpl.distribution_consistency_loss(gap, x_unobs, biased,
                                                     weights, trace)
        hidden = mp.forward(ad.concat([x_obs, x_unobs], axis=1), cbg.edges,
                            biased, weights, dcamp, cfg.rounds,
                            symmetric=cfg.symmetric_neighbors,
                            unweighted=cfg.no_centrality,
                            freeze_gap=cfg.freeze_gap,
                            project_gap=cfg.project_gap)
        logits, kl = classify_two_head(hidden, biased, heads)
        if "kl" in _omit_terms:
            kl = Tensor(0.0)
        probs = ad.column(ad.softmax_rows(logits), 1)
        clf = ad.binary_cross_entropy(ad.rows(probs, train_idx), y[train_idx])
        try:
            total, breakdown = total_loss(clf, kl, dist, cfg.kl_weight,
                                          cfg.dist_weight)
        except ValueError as err:
            raise TrainingDiverged(seed, epoch) from err
        if loss_log is not None:
            loss_log.append(breakdown)

        optimizer.zero_grad()
        total.backward()
        optimizer.step()

        scores = probs.data
        val_f1 = f1_score(scores[val_idx] >= 0.5, y[val_idx])
        val_auc = _safe_auc(scores[val_idx], y[val_idx])
        key = (val_f1, val_auc, -epoch)
        if best_key is None or key > best_key:
            best_key = key
            best = RunResult(
                seed=seed,
                f1=f1_score(scores[test_idx] >= 0.5, y[test_idx]),
                auc=_safe_auc(scores[test_idx], y[test_idx]),
            )
    return best


def mlp_train_once(cbg: CBGraph, cfg: TrainConfig, seed: int) -> RunResult:
    """Two-hidden-layer perceptron on raw features (masked financials zeroed),
    trained and selected under the same protocol and splits."""
    cfg.validate()
    train_idx, val_idx, test_idx = split_dataset(cbg.n, cfg.split, seed)
    rng = np.random.default_rng([seed, 11])
    feats = np.concatenate(
        [cbg.x_embed, cbg.x_business,
         cbg.x_financial * cbg.financial_observed[:, None]], axis=1)
    x = Tensor(feats)
    y = cbg.risk.astype(np.float64)
    h = cfg.hidden_dim
    w1 = Tensor(ad.glorot(rng, feats.shape[1], h), requires_grad=True)
    b1 = Tensor(np.zeros(h), requires_grad=True)
    w2 = Tensor(ad.glorot(rng, h, h), requires_grad=True)
    b2 = Tensor(np.zeros(h), requires_grad=True)
    w3 = Tensor(ad.glorot(rng, h, 2), requires_grad=True)
    b3 = Tensor(np.zeros(2), requires_grad=True)
    optimizer = ad.Adam([w1, b1, w2, b2, w3, b3], lr=cfg.lr)
    best_key = None
    best = None
    for epoch in range(cfg.epochs):
        hidden = ad.leaky_relu(ad.add(ad.matmul(x, w1), b1), _HEAD_SLOPE)
        hidden = ad.leaky_relu(ad.add(ad.matmul(hidden, w2), b2), _HEAD_SLOPE)
        logits = ad.add(ad.matmul(hidden, w3), b3)
        probs = ad.column(ad.softmax_rows(logits), 1)
        loss = ad.binary_cross_entropy(ad.rows(probs, train_idx), y[train_idx])
        if not np.isfinite(loss.item()):
            raise TrainingDiverged(seed, epoch)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        scores = probs.data
        key = (f1_score(scores[val_idx] >= 0.5, y[val_idx]),
               _safe_auc(scores[val_idx], y[val_idx]), -epoch)
        if best_key is None or key > best_key:
            best_key = key
            best = RunResult(
                seed=seed,
                f1=f1_score(scores[test_idx] >= 0.5, y[test_idx]),
                auc=_safe_auc(scores[test_idx], y[test_idx]),
            )
    return best


# ---------------------------------------------------------------------------
# Monte Carlo evaluation


@dataclass
class RunReport:
    config: dict
    runs: list[RunResult]
    f1_mean: float = field(init=False)
    f1_std: float = field(init=False)
    auc_mean: float = field(init=False)
    auc_std: float = field(init=False)

    def __post_init__(self):
        f1s = np.array([r.f1 for r in self.runs])
        aucs = np.array([r.auc for r in self.runs])
        self.f1_mean = float(f1s.mean())
        self.auc_mean = float(aucs.mean())
        self.f1_std = float(f1s.std(ddof=1)) if len(f1s) > 1 else 0.0
        self.auc_std = float(aucs.std(ddof=1)) if len(aucs) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "runs": [{"seed": r.seed, "f1": r.f1, "auc": r.auc} for r in self.runs],
            "f1_mean": self.f1_mean,
            "f1_std": self.f1_std,
            "auc_mean": self.auc_mean,
            "auc_std": self.auc_std,
        }


@dataclass
class PreparedSupply:
    """Graph-level work shared by every seed: subgraphs, the encoder batch,
    and the CBGraph skeleton (everything except embedding rows)."""

    graph: SupplyGraph
    subs: list
    batch: emb.SubgraphBatch
    template: CBGraph

    @classmethod
    def build(cls, g: SupplyGraph) -> "PreparedSupply":
        subs = extract_product_subgraphs(g)
        batch = emb.build_batch(subs)
        template = build_cb_graph(
            g, np.zeros((len(subs), EMBED_DIM)), subgraphs=subs)
        return cls(g, subs, batch, template)

    def with_embedding(self, x_embed: np.ndarray) -> CBGraph:
        t = self.template
        return CBGraph(t.node_ids, t.edges, x_embed, t.x_business, t.x_financial,
                       t.financial_observed, t.risk, t.cb_label)


def materialize(source, cfg: TrainConfig, seed: int, prepared=None):
    """Resolve the per-seed (CBGraph, gee_ctx) pair from either graph form."""
    if isinstance(source, CBGraph):
        if cfg.gee_mode == "joint":
            raise ValueError("joint embedding training needs a supply graph")
        return source, None
    prep = prepared if prepared is not None else PreparedSupply.build(source)
    encoder = emb.EncoderParams.init(np.random.default_rng([seed, 7]),
                                     table_dim=cfg.table_dim,
                                     node_dim=cfg.hidden_dim,
                                     hidden_dim=cfg.hidden_dim,
                                     out_dim=cfg.embed_dim)
    x_embed = emb.encode_batch(prep.batch, encoder).data
    cbg = prep.with_embedding(x_embed)
    if cfg.gee_mode == "joint":
        return cbg, (prep.batch, encoder)
    return cbg, None


def _run_seed(args):
    source, cfg, seed, model, prepared = args
    cbg, gee_ctx = materialize(source, cfg, seed, prepared)
    if model == "mlp":
        return mlp_train_once(cbg, cfg, seed)
    return train_once(cbg, cfg, seed, gee_ctx=gee_ctx)


def monte_carlo(source, cfg: TrainConfig, model: str = "hktgnn",
                prepared: PreparedSupply | None = None) -> RunReport:
    """Independent seeded runs aggregated into a RunReport."""
    cfg.validate()
    seeds = cfg.resolve_seeds()
    if prepared is None and isinstance(source, SupplyGraph):
        prepared = PreparedSupply.build(source)
    tasks = [(source, cfg, seed, model, prepared) for seed in seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            runs = list(pool.map(_run_seed, tasks))
    else:
        runs = [_run_seed(t) for t in tasks]
    config = cfg.to_dict()
    config["model"] = model
    return RunReport(config=config, runs=runs)


def mlp_baseline(source, cfg: TrainConfig) -> RunReport:
    return monte_carlo(source, cfg, model="mlp")


# ---------------------------------------------------------------------------
# sweeps and ablations


def sweep(source, cfg: TrainConfig, param: str):
    """One Monte Carlo report per grid point of K / lambda / gamma / split."""
    if param == "K":
        grid = [("K", k, replace(cfg, completion_steps=k)) for k in K_GRID]
    elif param == "lambda":
        grid = [("lambda", w, replace(cfg, kl_weight=w)) for w in WEIGHT_GRID]
    elif param == "gamma":
        grid = [("gamma", w, replace(cfg, dist_weight=w)) for w in WEIGHT_GRID]
    elif param == "split":
        grid = [("split", ":".join(str(int(x)) for x in s), replace(cfg, split=s))
                for s in SPLIT_GRID]
    else:
        raise ValueError(f"unknown sweep parameter {param!r}")
    results = []
    prepared = PreparedSupply.build(source) if isinstance(source, SupplyGraph) else None
    for name, value, point_cfg in grid:
        report = monte_carlo(source, point_cfg, prepared=prepared)
        results.append((name, value, report))
    return results


def sweep_to_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["param", "value", "f1_mean", "f1_std", "auc_mean", "auc_std"])
    for name, value, report in results:
        writer.writerow([name, value, report.f1_mean, report.f1_std,
                         report.auc_mean, report.auc_std])
    return buf.getvalue()


def ablate(source, cfg: TrainConfig) -> dict[str, RunReport]:
    """Paired arms over identical per-seed splits: the full model, completion
    disabled (K=0), centrality weighting disabled, and the MLP baseline."""
    prepared = PreparedSupply.build(source) if isinstance(source, SupplyGraph) else None
    return {
        "hktgnn": monte_carlo(source, cfg, prepared=prepared),
        "k0": monte_carlo(source, replace(cfg, completion_steps=0), prepared=prepared),
        "no_centrality": monte_carlo(source, replace(cfg, no_centrality=True),
                                     prepared=prepared),
        "mlp": monte_carlo(source, cfg, model="mlp", prepared=prepared),
    }
