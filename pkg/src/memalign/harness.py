"""Desk-scale training harness.

A hand-differentiated affine extractor + softmax classifier stands in for
the detector. Each step combines source cross-entropy, pseudo-label
cross-entropy on confident target instances, an adversarial domain
discriminator (gradient reversal), and the memory-retrieved instance
alignment loss, then applies one SGD-with-momentum update. Everything is
float64 and deterministic given the config seed.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import backends
from .config import ExperimentConfig, ScheduleConfig
from .errors import ConfigError, NoPositivesError, NonFiniteLossError
from .losses import (
    LossBreakdown,
    LossWeights,
    combine,
    discriminator_loss,
    instance_alignment_loss,
)
from .memory import InstanceRecord, MemoryBank, rebuild
from .retrieval import (
    BBox,
    Detection,
    RetrievalResult,
    ThresholdTable,
    _filter_keep_indices,
    compute_thresholds,
    minibatch_match_rate,
    retrieve,
)
from .world import ImageSample, SyntheticWorld, category_counts, generate_dataset

SWEEPABLE_PARAMETERS = ("lambda3", "K", "gamma", "policy")


# ---------------------------------------------------------------------------
# model


@dataclass
class ToyModel:
    """Affine extractor, affine softmax classifier, logistic discriminator."""

    extractor_weight: np.ndarray  # (d, d_in)
    extractor_bias: np.ndarray  # (d,)
    classifier_weight: np.ndarray  # (C, d)
    classifier_bias: np.ndarray  # (C,)
    discriminator: np.ndarray  # (d + 1,)

    @classmethod
    def init(
        cls, num_categories: int, input_dim: int, feature_dim: int, rng: np.random.Generator
    ) -> "ToyModel":
        return cls(
            extractor_weight=rng.standard_normal((feature_dim, input_dim))
            / np.sqrt(input_dim),
            extractor_bias=np.zeros(feature_dim),
            classifier_weight=rng.standard_normal((num_categories, feature_dim))
            / np.sqrt(feature_dim),
            classifier_bias=np.zeros(num_categories),
            discriminator=rng.standard_normal(feature_dim + 1) * 0.01,
        )

    def copy(self) -> "ToyModel":
        return ToyModel(*(p.copy() for p in self.parameters().values()))

    def parameters(self) -> Dict[str, np.ndarray]:
        return {
            "extractor_weight": self.extractor_weight,
            "extractor_bias": self.extractor_bias,
            "classifier_weight": self.classifier_weight,
            "classifier_bias": self.classifier_bias,
            "discriminator": self.discriminator,
        }

    def features(self, inputs: np.ndarray) -> np.ndarray:
        return inputs @ self.extractor_weight.T + self.extractor_bias

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.classifier_weight.T + self.classifier_bias

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Predicted categories (1-based) for raw inputs."""
        return np.argmax(self.logits(self.features(inputs)), axis=1) + 1


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def zero_velocities(model: ToyModel) -> Dict[str, np.ndarray]:
    return {name: np.zeros_like(p) for name, p in model.parameters().items()}


# ---------------------------------------------------------------------------
# pseudo-labeling


@dataclass(frozen=True)
class PseudoInstance:
    """A confident filtered target instance with its extracted feature."""

    index: int  # position within the image
    feature: np.ndarray
    category: int  # predicted, 1-based
    score: float
    box: BBox


def pseudo_label(
    model: ToyModel,
    target_images: Sequence[ImageSample],
    thresholds: ThresholdTable,
    iou_threshold: float,
) -> List[List[PseudoInstance]]:
    """Predict, then apply NMS and the per-category confidence gate.

    Returns one (possibly empty) instance list per input image; surviving
    instances carry extracted features for the downstream losses.
    """
    labeled: List[List[PseudoInstance]] = []
    for image in target_images:
        feats = model.features(image.inputs)
        probs = softmax(model.logits(feats))
        cats = np.argmax(probs, axis=1) + 1
        scores = probs.max(axis=1)
        detections = [
            Detection(image.boxes[j], int(cats[j]), float(scores[j]))
            for j in range(len(image))
        ]
        keep = _filter_keep_indices(detections, thresholds, iou_threshold)
        labeled.append(
            [
                PseudoInstance(
                    index=j,
                    feature=feats[j],
                    category=int(cats[j]),
                    score=float(scores[j]),
                    box=image.boxes[j],
                )
                for j in keep
            ]
        )
    return labeled


def extract_records(
    model: ToyModel, source_images: Sequence[ImageSample]
) -> List[InstanceRecord]:
    """Source instances as memory-bank candidates, in dataset order."""
    # one batched forward pass over the whole dataset, then split per image
    all_inputs = np.vstack([img.inputs for img in source_images])
    feats = model.features(all_inputs)
    preds = np.argmax(model.logits(feats), axis=1) + 1

    records = []
    row = 0
    for image_id, image in enumerate(source_images):
        for j in range(len(image)):
            records.append(
                InstanceRecord(
                    feature=feats[row],
                    category=int(image.categories[j]),
                    predicted_category=int(preds[row]),
                    source_image_id=image_id,
                    instance_index=j,
                )
            )
            row += 1
    return records


def per_category_accuracy(
    records: Sequence[InstanceRecord], num_categories: int
) -> Dict[int, float]:
    total = {c: 0 for c in range(1, num_categories + 1)}
    correct = {c: 0 for c in range(1, num_categories + 1)}
    for r in records:
        total[r.category] += 1
        if r.predicted_category == r.category:
            correct[r.category] += 1
    return {
        c: (correct[c] / total[c]) if total[c] else 0.0
        for c in range(1, num_categories + 1)
    }


def evaluate_accuracy(
    model: ToyModel, images: Sequence[ImageSample], average: str = "macro"
) -> float:
    """Classification accuracy over all instances.

    ``macro`` averages per-category accuracies (every category weighs the
    same, like a per-class AP mean); ``micro`` is the plain instance rate.
    """
    if average not in ("macro", "micro"):
        raise ValueError(f"average must be 'macro' or 'micro', got {average!r}")
    hits: Dict[int, int] = {}
    totals: Dict[int, int] = {}
    for image in images:
        preds = model.predict(image.inputs)
        for p, t in zip(preds.tolist(), image.categories.tolist()):
            totals[t] = totals.get(t, 0) + 1
            hits[t] = hits.get(t, 0) + (1 if p == t else 0)
    if not totals:
        return 0.0
    if average == "micro":
        return sum(hits.values()) / sum(totals.values())
    return float(np.mean([hits[c] / totals[c] for c in totals]))


# ---------------------------------------------------------------------------
# one optimization step


@dataclass
class TrainLogs:
    """Accumulators shared across the steps of one run."""

    minibatch_rates: List[float] = field(default_factory=list)
    pair_similarities: List[float] = field(default_factory=list)
    n_queries: int = 0
    n_misses: int = 0
    n_queries_after_populated: int = 0
    n_misses_after_populated: int = 0
    populated_at_step: Optional[int] = None
    skipped_alignment_steps: int = 0


def _accumulate_ce(
    grads: Dict[str, np.ndarray],
    model: ToyModel,
    inputs: np.ndarray,
    feats: np.ndarray,
    labels: np.ndarray,
    weight: float,
) -> float:
    """Softmax cross-entropy plus its gradient contributions; returns value."""
    n = inputs.shape[0]
    probs = softmax(model.logits(feats))
    picked = probs[np.arange(n), labels - 1]
    value = float(np.mean(-np.log(np.clip(picked, 1e-300, None))))

    dlogits = probs.copy()
    dlogits[np.arange(n), labels - 1] -= 1.0
    dlogits /= n
    grads["classifier_weight"] += weight * (dlogits.T @ feats)
    grads["classifier_bias"] += weight * dlogits.sum(axis=0)
    dfeat = dlogits @ model.classifier_weight
    grads["extractor_weight"] += weight * (dfeat.T @ inputs)
    grads["extractor_bias"] += weight * dfeat.sum(axis=0)
    return value


def train_step(
    model: ToyModel,
    bank: MemoryBank,
    batch_source: Sequence[ImageSample],
    batch_target: Sequence[ImageSample],
    schedule: ScheduleConfig,
    weights: LossWeights,
    *,
    thresholds: Optional[ThresholdTable] = None,
    rng: Optional[np.random.Generator] = None,
    velocities: Optional[Dict[str, np.ndarray]] = None,
    logs: Optional[TrainLogs] = None,
) -> Tuple[ToyModel, LossBreakdown]:
    """One combined update over a source/target image batch.

    Gradients accumulate in a fixed order (supervised, pseudo-label,
    discriminator, alignment) and the model is updated in place with SGD
    momentum. Raises NonFiniteLossError with a per-term dump if any term
    diverges.
    """
    if thresholds is None:
        thresholds = ThresholdTable.uniform(
            range(1, bank.num_categories + 1), schedule.base_delta
        )
    if rng is None:
        rng = np.random.default_rng(0)
    if velocities is None:
        velocities = zero_velocities(model)

    grads = {name: np.zeros_like(p) for name, p in model.parameters().items()}

    # source supervised cross-entropy
    xs = np.vstack([img.inputs for img in batch_source])
    ys = np.concatenate([img.categories for img in batch_source])
    fs = model.features(xs)
    l_sup = _accumulate_ce(grads, model, xs, fs, ys, 1.0)
    n_sup = xs.shape[0]

    # pseudo-label cross-entropy on confident target instances
    pseudo = pseudo_label(model, batch_target, thresholds, schedule.nms_iou)
    kept = [(img, inst) for img, insts in zip(batch_target, pseudo) for inst in insts]
    l_unsup = 0.0
    n_unsup = len(kept)
    if kept and weights.lambda1 > 0.0:
        xt = np.vstack([img.inputs[inst.index] for img, inst in kept])
        ft = np.vstack([inst.feature for _, inst in kept])
        yt = np.array([inst.category for _, inst in kept], dtype=np.int64)
        l_unsup = _accumulate_ce(grads, model, xt, ft, yt, weights.lambda1)

    # adversarial domain discriminator over every instance in the batch
    xt_all = np.vstack([img.inputs for img in batch_target])
    ft_all = model.features(xt_all)
    l_dis = 0.0
    n_dis = 0
    if weights.lambda2 > 0.0:
        domain_feats = [(fs[i], 0) for i in range(fs.shape[0])]
        domain_feats += [(ft_all[i], 1) for i in range(ft_all.shape[0])]
        n_dis = len(domain_feats)
        l_dis, grad_disc, reversed_grads = discriminator_loss(
            domain_feats, model.discriminator
        )
        grads["discriminator"] += weights.lambda2 * grad_disc
        rev = np.vstack(reversed_grads)
        x_all = np.vstack([xs, xt_all])
        grads["extractor_weight"] += weights.lambda2 * (rev.T @ x_all)
        grads["extractor_bias"] += weights.lambda2 * rev.sum(axis=0)

    # memory-retrieved instance alignment
    l_ins = 0.0
    n_ins = 0
    if weights.lambda3 > 0.0:
        aligned: List[List[Tuple[np.ndarray, RetrievalResult]]] = []
        aligned_inputs: List[np.ndarray] = []
        after_pop = logs is not None and logs.populated_at_step is not None
        for img, insts in zip(batch_target, pseudo):
            group = []
            for inst in insts:
                if logs is not None:
                    logs.n_queries += 1
                    if after_pop:
                        logs.n_queries_after_populated += 1
                try:
                    result = retrieve(
                        bank, inst.feature, inst.category, schedule.k_retrieval, rng
                    )
                except NoPositivesError:
                    if logs is not None:
                        logs.n_misses += 1
                        if after_pop:
                            logs.n_misses_after_populated += 1
                    continue
                group.append((inst.feature, result))
                aligned_inputs.append(img.inputs[inst.index])
                if logs is not None:
                    logs.pair_similarities.extend(result.positive_similarities)
            if group:
                aligned.append(group)
        n_ins = len(aligned_inputs)
        if aligned:
            l_ins, ins_grads = instance_alignment_loss(aligned, weights.margin)
            for g, x in zip(ins_grads, aligned_inputs):
                grads["extractor_weight"] += weights.lambda3 * np.outer(g, x)
                grads["extractor_bias"] += weights.lambda3 * g
        elif logs is not None:
            logs.skipped_alignment_steps += 1

    breakdown = combine(l_sup, l_unsup, l_dis, l_ins, weights)
    breakdown.n_sup, breakdown.n_unsup = n_sup, n_unsup
    breakdown.n_dis, breakdown.n_ins = n_dis, n_ins
    if not np.isfinite(breakdown.total):
        raise NonFiniteLossError(f"diverged step: {breakdown.as_dict()}")

    params = model.parameters()
    for name, g in grads.items():
        v = velocities[name]
        v *= schedule.momentum
        v += g
        params[name] -= schedule.learning_rate * v
    return model, breakdown


def evaluate_instance_alignment(
    model: ToyModel,
    bank: MemoryBank,
    target_images: Sequence[ImageSample],
    schedule: ScheduleConfig,
    weights: LossWeights,
    thresholds: ThresholdTable,
    rng: np.random.Generator,
) -> Tuple[float, int, int]:
    """Alignment loss of the current model against a given bank, no update.

    Returns (value, n_queries, n_misses).
    """
    pseudo = pseudo_label(model, target_images, thresholds, schedule.nms_iou)
    aligned: List[List[Tuple[np.ndarray, RetrievalResult]]] = []
    queries = 0
    misses = 0
    for insts in pseudo:
        group = []
        for inst in insts:
            queries += 1
            try:
                result = retrieve(
                    bank, inst.feature, inst.category, schedule.k_retrieval, rng
                )
            except NoPositivesError:
                misses += 1
                continue
            group.append((inst.feature, result))
        if group:
            aligned.append(group)
    value, _ = instance_alignment_loss(aligned, weights.margin)
    return value, queries, misses


# ---------------------------------------------------------------------------
# metrics


def mean_pairwise_distance(matrix: np.ndarray) -> float:
    """Mean Euclidean distance over unordered pairs of rows (0 if < 2 rows)."""
    n = matrix.shape[0]
    if n < 2:
        return 0.0
    sq = np.sum(matrix * matrix, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (matrix @ matrix.T)
    np.clip(d2, 0.0, None, out=d2)
    iu = np.triu_indices(n, k=1)
    return float(np.mean(np.sqrt(d2[iu])))


def variance_proxy(bank: MemoryBank) -> Dict[int, float]:
    """Per-category mean pairwise distance among stored features."""
    return {c: mean_pairwise_distance(bank.category_matrix(c)) for c in bank.categories()}


@dataclass
class MetricsReport:
    """Run-level metrics; rate fields all live in [0, 1]."""

    miss_rate_minibatch: float
    miss_rate_memory: float
    miss_rate_memory_after_populated: float
    bank_populated_at_step: Optional[int]
    n_alignment_queries: int
    n_memory_misses: int
    mean_pair_similarity: Optional[float]
    intra_class_variance_proxy: Dict[int, float]
    variance_proxy_mean: float
    memory_counts: Dict[int, int]
    memory_generation: int
    target_accuracy: Optional[float] = None
    target_accuracy_micro: Optional[float] = None
    source_accuracy: Optional[float] = None
    min_pair_similarity: Optional[float] = None
    per_epoch: List[Dict[str, float]] = field(default_factory=list)
    n_steps: int = 0

    def as_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["intra_class_variance_proxy"] = {
            str(c): v for c, v in self.intra_class_variance_proxy.items()
        }
        out["memory_counts"] = {str(c): v for c, v in self.memory_counts.items()}
        return out


def compute_metrics(
    bank: MemoryBank,
    aligned_pairs: Sequence[float],
    minibatch_log: Sequence[float],
    memory_log: Optional[TrainLogs] = None,
) -> MetricsReport:
    """Fold the run logs and the final bank into a MetricsReport.

    aligned_pairs are the logged similarities of every retrieved positive;
    minibatch_log holds one in-batch match rate per step.
    """
    logs = memory_log if memory_log is not None else TrainLogs()
    proxy = variance_proxy(bank)
    populated = [v for c, v in proxy.items() if bank.count(c) >= 2]
    return MetricsReport(
        miss_rate_minibatch=(
            1.0 - float(np.mean(minibatch_log)) if len(minibatch_log) else 0.0
        ),
        miss_rate_memory=(
            logs.n_misses / logs.n_queries if logs.n_queries else 0.0
        ),
        miss_rate_memory_after_populated=(
            logs.n_misses_after_populated / logs.n_queries_after_populated
            if logs.n_queries_after_populated
            else 0.0
        ),
        bank_populated_at_step=logs.populated_at_step,
        n_alignment_queries=logs.n_queries,
        n_memory_misses=logs.n_misses,
        mean_pair_similarity=(
            float(np.mean(aligned_pairs)) if len(aligned_pairs) else None
        ),
        min_pair_similarity=(
            float(np.min(aligned_pairs)) if len(aligned_pairs) else None
        ),
        intra_class_variance_proxy=proxy,
        variance_proxy_mean=float(np.mean(populated)) if populated else 0.0,
        memory_counts=bank.counts(),
        memory_generation=bank.build_generation,
    )


# ---------------------------------------------------------------------------
# experiment driver


@dataclass
class RunResult:
    """Everything a finished run produced."""

    config: ExperimentConfig
    report: MetricsReport
    bank: MemoryBank
    model: ToyModel
    world: SyntheticWorld
    source_images: List[ImageSample]
    target_images: List[ImageSample]


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Run one full experiment: build world and datasets, train with the
    memory-rebuild cadence, and assemble the metrics report.

    Deterministic: identical config (seed included) gives an identical
    report, bank, and model.
    """
    world_rng, model_rng, train_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    wc = config.world
    world = SyntheticWorld.build(
        world_rng,
        seed=config.seed,
        num_categories=wc.categories,
        input_dim=wc.input_dim,
        class_separation=wc.class_separation,
        class_spread=wc.class_spread,
        modes_per_category=wc.modes_per_category,
        mode_scatter=wc.mode_scatter,
        zipf_exponent=wc.zipf_exponent,
        rotation_angle_deg=wc.rotation_angle_deg,
        shift_offset_scale=wc.shift_offset_scale,
        target_noise=wc.target_noise,
    )
    source_images = generate_dataset(
        world,
        "source",
        wc.source_images,
        wc.instances_per_image,
        world_rng,
        min_per_category=wc.min_per_category,
    )
    target_images = generate_dataset(
        world, "target", wc.target_images, wc.instances_per_image, world_rng
    )

    bank = MemoryBank.create(
        wc.categories, wc.feature_dim, config.policy, category_counts(source_images)
    )
    model = ToyModel.init(wc.categories, wc.input_dim, wc.feature_dim, model_rng)
    velocities = zero_velocities(model)
    thresholds = ThresholdTable.uniform(
        range(1, wc.categories + 1), config.schedule.base_delta
    )
    logs = TrainLogs()
    per_epoch: List[Dict[str, float]] = []

    schedule = config.schedule
    steps_per_epoch = len(source_images) // schedule.batch_size
    rebuilds = schedule.rebuilds_per_epoch
    rebuild_steps = {(j * steps_per_epoch) // rebuilds for j in range(rebuilds)}
    if schedule.epochs > 0 and len(rebuild_steps) != rebuilds:
        raise ConfigError(
            "schedule.memory_update_fraction: rebuild cadence collides "
            f"({rebuilds} rebuilds into {steps_per_epoch} steps)"
        )

    global_step = 0
    for epoch in range(schedule.epochs):
        perm_s = train_rng.permutation(len(source_images))
        perm_t = train_rng.permutation(len(target_images))
        sums = {k: 0.0 for k in ("l_sup", "l_unsup", "l_dis", "l_ins", "total")}
        counts = {k: 0 for k in ("n_sup", "n_unsup", "n_dis", "n_ins")}
        for step in range(steps_per_epoch):
            if step in rebuild_steps:
                records = extract_records(model, source_images)
                bank = rebuild(bank, records)
                thresholds = compute_thresholds(
                    per_category_accuracy(records, wc.categories),
                    schedule.base_delta,
                )
                if logs.populated_at_step is None and bank.fully_populated:
                    logs.populated_at_step = global_step

            lo = step * schedule.batch_size
            batch_source = [source_images[i] for i in perm_s[lo : lo + schedule.batch_size]]
            batch_target = [
                target_images[perm_t[(lo + i) % len(target_images)]]
                for i in range(schedule.batch_size)
            ]
            logs.minibatch_rates.append(
                minibatch_match_rate(
                    [c for img in batch_source for c in img.categories.tolist()],
                    [c for img in batch_target for c in img.categories.tolist()],
                )
            )
            model, breakdown = train_step(
                model,
                bank,
                batch_source,
                batch_target,
                schedule,
                config.weights,
                thresholds=thresholds,
                rng=train_rng,
                velocities=velocities,
                logs=logs,
            )
            for k in sums:
                sums[k] += getattr(breakdown, k)
            for k in counts:
                counts[k] += getattr(breakdown, k)
            global_step += 1
        entry: Dict[str, float] = {"epoch": epoch}
        entry.update({k: v / steps_per_epoch for k, v in sums.items()})
        entry.update(counts)
        per_epoch.append(entry)

    report = compute_metrics(bank, logs.pair_similarities, logs.minibatch_rates, logs)
    report.target_accuracy = evaluate_accuracy(model, target_images, "macro")
    report.target_accuracy_micro = evaluate_accuracy(model, target_images, "micro")
    report.source_accuracy = evaluate_accuracy(model, source_images, "micro")
    report.per_epoch = per_epoch
    report.n_steps = global_step
    return RunResult(
        config=config,
        report=report,
        bank=bank,
        model=model,
        world=world,
        source_images=source_images,
        target_images=target_images,
    )


def report_to_json(result: RunResult) -> str:
    """Canonical report.json text: stable key order, newline-terminated."""
    payload = {
        "schema_version": 1,
        "backend": backends.BACKEND,
        "resolved_config": result.config.to_dict(),
        "metrics": result.report.as_dict(),
    }
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# sweeps


def apply_sweep_value(
    config: ExperimentConfig, parameter: str, value: Any
) -> ExperimentConfig:
    """Derive a config with one swept parameter replaced."""
    if parameter == "lambda3":
        return config.replace(weights={"lambda3": float(value)})
    if parameter == "K":
        return config.replace(schedule={"k_retrieval": int(value)})
    if parameter == "gamma":
        return config.replace(policy={"gamma": float(value)})
    if parameter == "policy":
        return config.replace(policy={"variant": str(value)})
    raise ConfigError(
        f"parameter: {parameter!r} not sweepable "
        f"(choose from {', '.join(SWEEPABLE_PARAMETERS)})"
    )


@dataclass
class SweepEntry:
    """Aggregated reports of one swept value across seeds."""

    parameter: str
    value: Any
    seeds: List[int]
    reports: List[MetricsReport]

    def _collect(self, name: str) -> List[float]:
        return [
            getattr(r, name) for r in self.reports if getattr(r, name) is not None
        ]

    def mean(self, name: str) -> Optional[float]:
        vals = self._collect(name)
        return float(np.mean(vals)) if vals else None

    def std(self, name: str) -> Optional[float]:
        vals = self._collect(name)
        return float(np.std(vals)) if vals else None


def _sweep_one(args: Tuple[Dict[str, Any], str, Any, int]) -> Dict[str, Any]:
    config_dict, parameter, value, seed = args
    from .config import config_from_dict  # local import keeps workers light

    cfg = apply_sweep_value(config_from_dict(config_dict), parameter, value)
    cfg = cfg.replace(seed=seed)
    return run_experiment(cfg).report.as_dict()


def _report_from_dict(data: Dict[str, Any]) -> MetricsReport:
    data = dict(data)
    data["intra_class_variance_proxy"] = {
        int(c): v for c, v in data["intra_class_variance_proxy"].items()
    }
    data["memory_counts"] = {int(c): v for c, v in data["memory_counts"].items()}
    return MetricsReport(**data)


def sweep(
    config: ExperimentConfig,
    parameter: str,
    values: Sequence[Any],
    seeds: Optional[Sequence[int]] = None,
    jobs: int = 1,
) -> List[SweepEntry]:
    """Independent seeded runs for every swept value.

    Each value runs once per seed (default: five seeds starting at the
    config seed); entries come back in the given value order regardless of
    parallelism.
    """
    if not values:
        raise ConfigError("values: need at least one sweep value")
    if seeds is None:
        seeds = [config.seed + i for i in range(5)]
    tasks = [
        (config.to_dict(), parameter, value, seed) for value in values for seed in seeds
    ]
    # validate up front so a bad parameter/value fails before any run starts
    for value in values:
        apply_sweep_value(config, parameter, value)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_sweep_one, tasks))
    else:
        raw = [_sweep_one(t) for t in tasks]

    entries = []
    per_value = len(seeds)
    for i, value in enumerate(values):
        chunk = raw[i * per_value : (i + 1) * per_value]
        entries.append(
            SweepEntry(
                parameter=parameter,
                value=value,
                seeds=list(seeds),
                reports=[_report_from_dict(r) for r in chunk],
            )
        )
    return entries


def sweep_to_csv(entries: Sequence[SweepEntry]) -> str:
    """CSV table: one row per swept value with mean/std aggregates."""
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "parameter",
            "value",
            "n_seeds",
            "target_accuracy_mean",
            "target_accuracy_std",
            "miss_rate_minibatch_mean",
            "miss_rate_memory_mean",
            "mean_pair_similarity_mean",
        ]
    )

    def fmt(x: Optional[float]) -> str:
        return "" if x is None else repr(x)

    for e in entries:
        writer.writerow(
            [
                e.parameter,
                e.value,
                len(e.seeds),
                fmt(e.mean("target_accuracy")),
                fmt(e.std("target_accuracy")),
                fmt(e.mean("miss_rate_minibatch")),
                fmt(e.mean("miss_rate_memory")),
                fmt(e.mean("mean_pair_similarity")),
            ]
        )
    return buf.getvalue()
