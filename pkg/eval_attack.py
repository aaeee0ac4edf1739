"""
Evaluation harness: positive/negative triples, ROC AUC, and white-box collision attacks.

Attacks run momentum PGD on the embedding's real-valued surrogate. Positive pairs are
pushed apart (score descent) and negative pairs pulled together (score ascent), each
inside an l-inf or l1 ball around the original image. The discrete hash verdicts are
reported next to the surrogate AUC so transfer to the binary embedding is measured.
"""

import csv
import dataclasses
import enum
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import rankdata

from core_image import Image, load_png, psnr, save_png
from rate_tally import RateTally
from ref import (
    CompareParams,
    Direction,
    hamming_score,
    ref_compare,
    ref_embed,
    ref_surrogate,
    score,
    score_gradient,
)
from rpws import RpwsPayload, RpwsScheme, encode_payload
from sig import SecretKey, sign
from transforms import TransformSpec, apply

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

EPSILON_GRID = (1, 2, 4, 8, 16, 32)
ALLOWED_EPSILONS = (0,) + EPSILON_GRID
EPSILON_DENOMINATOR = 255
DEFAULT_STEPS = 20
DEFAULT_MOMENTUM = 0.9
DEFAULT_STEP_SCALE = 2.5
DEFAULT_L1_FRACTION = 0.01
DEFAULT_ATTACK_SEED = 0
DEFAULT_TRIPLE_SEED = 0

# Independent rng streams per (seed, triple index)
PGD_STREAM = 1
CONTROL_STREAM = 2

SCORE_SURROGATE = "surrogate"
SCORE_HAMMING = "hamming"
SCORE_MODES = (SCORE_SURROGATE, SCORE_HAMMING)

CSV_HEADER = ("norm", "epsilon_num", "clean_auc", "attacked_auc", "hash_far", "hash_frr", "seconds")
BUDGET_SLACK = 0.01


class CorpusError(ValueError):
    """Raised when a corpus cannot produce evaluation triples."""


class Norm(str, enum.Enum):
    LINF = "linf"
    L1 = "l1"


@dataclass(frozen=True)
class EvalTriple:
    """Base image, a transformed copy of it, and a different corpus image."""

    base: Image
    positive: Image
    negative: Image
    transform: str
    base_index: int
    negative_index: int


@dataclass(frozen=True)
class AttackParams:
    """
    Attack budget and optimizer settings.

    epsilon_num is the budget in channel-value units (epsilon = epsilon_num / 255).
    The l1 radius is epsilon_num * D with D the number of channel values, so both
    norms allow the same mean per-value change.
    """

    norm: Norm = Norm.LINF
    epsilon_num: int = 8
    steps: int = DEFAULT_STEPS
    momentum: float = DEFAULT_MOMENTUM
    step_scale: float = DEFAULT_STEP_SCALE
    l1_fraction: float = DEFAULT_L1_FRACTION
    random_start: bool = True

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(self.norm))
        if self.epsilon_num not in ALLOWED_EPSILONS:
            raise ValueError(
                f"epsilon_num must be one of {ALLOWED_EPSILONS}, got {self.epsilon_num}"
            )
        if self.steps < 1:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.step_scale <= 0:
            raise ValueError(f"step_scale must be positive, got {self.step_scale}")
        if not 0.0 < self.l1_fraction <= 1.0:
            raise ValueError(f"l1_fraction must be in (0, 1], got {self.l1_fraction}")

    @property
    def epsilon(self) -> float:
        return self.epsilon_num / EPSILON_DENOMINATOR

    def radius(self, n_values: int) -> float:
        """Ball radius in channel-value units."""
        if self.norm is Norm.L1:
            return float(self.epsilon_num * n_values)
        return float(self.epsilon_num)

    def step_size(self, n_values: int) -> float:
        return self.step_scale * self.radius(n_values) / self.steps

    def to_dict(self) -> dict:
        return {
            "norm": self.norm.value,
            "epsilon_num": self.epsilon_num,
            "steps": self.steps,
            "momentum": self.momentum,
            "step_scale": self.step_scale,
            "l1_fraction": self.l1_fraction,
            "random_start": self.random_start,
        }


@dataclass(frozen=True)
class AttackSettings:
    """Sweep-wide attack configuration (the [attack] config section)."""

    norms: Tuple[Norm, ...] = (Norm.LINF, Norm.L1)
    epsilons: Tuple[int, ...] = EPSILON_GRID
    steps: int = DEFAULT_STEPS
    momentum: float = DEFAULT_MOMENTUM
    step_scale: float = DEFAULT_STEP_SCALE
    l1_fraction: float = DEFAULT_L1_FRACTION
    random_start: bool = True
    seed: int = DEFAULT_ATTACK_SEED
    workers: int = 1
    record_timing: bool = False
    save_attacked: str = ""
    save_limit: int = 8
    score_mode: str = SCORE_SURROGATE

    def __post_init__(self):
        object.__setattr__(self, "norms", tuple(Norm(n) for n in self.norms))
        object.__setattr__(self, "epsilons", tuple(int(e) for e in self.epsilons))
        if not self.norms:
            raise ValueError("At least one norm is required")
        for eps in self.epsilons:
            if eps not in ALLOWED_EPSILONS:
                raise ValueError(f"epsilon {eps} is not one of {ALLOWED_EPSILONS}")
        if self.workers < 1:
            raise ValueError(f"workers must be positive, got {self.workers}")
        if self.save_limit < 0:
            raise ValueError(f"save_limit must be non-negative, got {self.save_limit}")
        if self.score_mode not in SCORE_MODES:
            raise ValueError(f"score_mode must be one of {SCORE_MODES}, got {self.score_mode!r}")
        # Validates the optimizer fields
        self.params_for(self.norms[0], 0)

    def params_for(self, norm: Norm, epsilon_num: int) -> AttackParams:
        return AttackParams(
            norm=norm,
            epsilon_num=epsilon_num,
            steps=self.steps,
            momentum=self.momentum,
            step_scale=self.step_scale,
            l1_fraction=self.l1_fraction,
            random_start=self.random_start,
        )

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["norms"] = [n.value for n in self.norms]
        data["epsilons"] = list(self.epsilons)
        return data


@dataclass(frozen=True)
class RocResult:
    """
    Scored pairs and their AUC. scores holds (score, label) in triple order,
    positive pair first.
    """

    auc: float
    scores: Tuple[Tuple[float, int], ...]
    hash_far: float
    hash_frr: float
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SweepRow:
    """One (norm, epsilon) result. control_auc is not part of the CSV."""

    norm: str
    epsilon_num: int
    clean_auc: float
    attacked_auc: float
    hash_far: float
    hash_frr: float
    seconds: float
    control_auc: Optional[float] = field(default=None, compare=False)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Mann-Whitney AUC: probability a positive outscores a negative, ties counted half.

    Raises:
        ValueError: If either class is empty
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative score")
    ranks = rankdata(scores)  # average ranks for ties
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def build_triples(
    corpus: Sequence[Image], suite: Sequence[TransformSpec], seed: int = DEFAULT_TRIPLE_SEED
) -> List[EvalTriple]:
    """
    One triple per (base, transform); the negative is a uniformly drawn other image.

    Raises:
        CorpusError: If the corpus has fewer than two images
    """
    n = len(corpus)
    if n < 2:
        raise CorpusError(f"Need at least 2 corpus images for triples, got {n}")
    rng = np.random.default_rng(seed)
    triples = []
    for i, base in enumerate(corpus):
        for spec in suite:
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            triples.append(EvalTriple(base, apply(spec, base), corpus[j], spec.name, i, j))
    logger.info("Built %d triples (%d images x %d transforms)", len(triples), n, len(suite))
    return triples


def load_directory_corpus(
    directory: PathLike,
) -> Tuple[Dict[str, Image], List[Tuple[str, str, Image]]]:
    """
    Read a copy-detection style directory: <id>.png are bases, <id>__<transform>.png
    are transformed copies of base <id>.

    Returns:
        tuple: ({id: base image}, [(id, transform, image)])
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"Corpus directory {directory} does not exist")
    bases = {}
    positives = []
    for path in sorted(directory.glob("*.png")):
        stem = path.stem
        if "__" in stem:
            base_id, transform = stem.split("__", 1)
            positives.append((base_id, transform, load_png(path)))
        else:
            bases[stem] = load_png(path)
    logger.info("Loaded %d bases and %d positives from %s", len(bases), len(positives), directory)
    return bases, positives


def build_directory_triples(
    bases: Dict[str, Image],
    positives: Sequence[Tuple[str, str, Image]],
    seed: int = DEFAULT_TRIPLE_SEED,
) -> List[EvalTriple]:
    """
    One triple per transformed copy whose base exists; negatives drawn from other bases.
    """
    ids = sorted(bases)
    if len(ids) < 2:
        raise CorpusError(f"Need at least 2 base images, got {len(ids)}")
    index = {base_id: i for i, base_id in enumerate(ids)}
    rng = np.random.default_rng(seed)
    triples = []
    for base_id, transform, image in positives:
        if base_id not in index:
            logger.warning("Skipping %s__%s: no base image %s.png", base_id, transform, base_id)
            continue
        i = index[base_id]
        j = int(rng.integers(len(ids) - 1))
        if j >= i:
            j += 1
        triples.append(EvalTriple(bases[base_id], image, bases[ids[j]], transform, i, j))
    if not triples:
        raise CorpusError("Corpus directory produced no triples")
    return triples


def _pair_scores(triple: EvalTriple, score_mode: str, compare: CompareParams):
    """(positive score, negative score, positive hash match, negative hash match)."""
    base_embedding = ref_embed(triple.base)
    pos_embedding = ref_embed(triple.positive)
    neg_embedding = ref_embed(triple.negative)
    if score_mode == SCORE_HAMMING:
        pos_score = hamming_score(base_embedding, pos_embedding)
        neg_score = hamming_score(base_embedding, neg_embedding)
    else:
        base_surrogate = ref_surrogate(triple.base)
        pos_score = score(base_surrogate, ref_surrogate(triple.positive))
        neg_score = score(base_surrogate, ref_surrogate(triple.negative))
    return (
        pos_score,
        neg_score,
        ref_compare(base_embedding, pos_embedding, compare),
        ref_compare(base_embedding, neg_embedding, compare),
    )


def clean_roc(
    triples: Sequence[EvalTriple],
    score_mode: str = SCORE_SURROGATE,
    compare: CompareParams = CompareParams(),
    params: Optional[dict] = None,
) -> RocResult:
    """
    Score every pair (positive label 1, negative label 0) and compute the AUC.

    Hash verdicts: hash_far is the fraction of negative pairs ref_compare accepts,
    hash_frr the fraction of positive pairs it rejects.
    """
    if not triples:
        raise ValueError("clean_roc needs at least one triple")
    if score_mode not in SCORE_MODES:
        raise ValueError(f"Unknown score mode {score_mode!r}")
    scores = []
    false_rejects = 0
    false_accepts = 0
    for triple in triples:
        pos_score, neg_score, pos_match, neg_match = _pair_scores(triple, score_mode, compare)
        scores.append((pos_score, 1))
        scores.append((neg_score, 0))
        false_rejects += not pos_match
        false_accepts += neg_match
    values, labels = zip(*scores)
    return RocResult(
        auc=roc_auc(values, labels),
        scores=tuple(scores),
        hash_far=false_accepts / len(triples),
        hash_frr=false_rejects / len(triples),
        params=dict(params or {}, score_mode=score_mode, tau=compare.tau),
    )


def project_l1(delta: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball (sort-based, Duchi et al.)."""
    magnitudes = np.abs(delta).reshape(-1)
    if magnitudes.sum() <= radius:
        return delta
    if radius <= 0:
        return np.zeros_like(delta)
    ordered = np.sort(magnitudes)[::-1]
    cumulative = np.cumsum(ordered)
    ks = np.arange(1, ordered.size + 1)
    rho = np.nonzero(ordered * ks > cumulative - radius)[0][-1]
    theta = (cumulative[rho] - radius) / (rho + 1)
    return np.sign(delta) * np.maximum(np.abs(delta) - theta, 0.0)


def project(delta: np.ndarray, params: AttackParams) -> np.ndarray:
    radius = params.radius(delta.size)
    if params.norm is Norm.L1:
        return project_l1(delta, radius)
    return np.clip(delta, -radius, radius)


def _finalize(original: np.ndarray, adversarial: np.ndarray, norm: Norm) -> Image:
    # Integer originals and an integer l-inf radius keep rounding inside the ball and
    # [0, 255]; the l1 ball only survives truncation toward zero
    offset = adversarial - original
    delta = np.rint(offset) if norm is Norm.LINF else np.trunc(offset)
    return Image((original + delta).astype(np.uint8))


def _ascent_step(accumulated: np.ndarray, step: float, params: AttackParams) -> np.ndarray:
    if params.norm is Norm.LINF:
        return step * np.sign(accumulated)
    flat = accumulated.reshape(-1)
    k = max(1, int(round(params.l1_fraction * flat.size)))
    top = np.argpartition(np.abs(flat), flat.size - k)[flat.size - k :]
    update = np.zeros_like(flat)
    update[top] = np.sign(flat[top]) * (step / k)
    return update.reshape(accumulated.shape)


def _start_noise(shape: tuple, params: AttackParams, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw inside the l-inf ball, or a random direction at a random l1 radius."""
    radius = params.radius(int(np.prod(shape)))
    if params.norm is Norm.LINF:
        return rng.uniform(-radius, radius, size=shape)
    noise = rng.standard_normal(shape)
    return noise * (radius * rng.random() / max(np.abs(noise).sum(), 1e-12))


def pgd_perturb(
    img: Image,
    target,
    direction: Direction,
    params: AttackParams,
    rng: Optional[np.random.Generator] = None,
) -> Image:
    """
    Momentum PGD on score(surrogate(img'), target) in the given direction.

    With an rng the search starts from a random point of the ball (a positive equal
    to its base sits at the score maximum, where the gradient vanishes).
    Returns img itself when the budget is zero.
    """
    radius = params.radius(img.size)
    if radius == 0:
        return img
    original = img.pixels.astype(np.float64)
    adversarial = original.copy()
    if rng is not None:
        adversarial = np.clip(original + _start_noise(original.shape, params, rng), 0.0, 255.0)
    accumulated = np.zeros_like(original)
    step = params.step_size(img.size)
    for _ in range(params.steps):
        gradient = int(direction) * score_gradient(adversarial, target)
        scale = np.abs(gradient).sum()
        if scale == 0.0:
            break
        accumulated = params.momentum * accumulated + gradient / scale
        adversarial = adversarial + _ascent_step(accumulated, step, params)
        adversarial = np.clip(original + project(adversarial - original, params), 0.0, 255.0)
    return _finalize(original, adversarial, params.norm)


def _triple_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, stream]))


def pgd_attack(
    triple: EvalTriple,
    params: AttackParams,
    seed: int = DEFAULT_ATTACK_SEED,
    index: int = 0,
) -> EvalTriple:
    """
    Push the positive away from the base and pull the negative toward it.
    The base image is never modified. Random starts are seeded by (seed, index).
    """
    if params.radius(triple.base.size) == 0:
        return triple
    target = ref_surrogate(triple.base)
    rng = _triple_rng(seed, index, PGD_STREAM) if params.random_start else None
    return dataclasses.replace(
        triple,
        positive=pgd_perturb(triple.positive, target, Direction.DESCENT, params, rng),
        negative=pgd_perturb(triple.negative, target, Direction.ASCENT, params, rng),
    )


def _random_perturb(img: Image, params: AttackParams, rng: np.random.Generator) -> Image:
    original = img.pixels.astype(np.float64)
    radius = params.radius(img.size)
    if params.norm is Norm.LINF:
        noise = radius * rng.choice([-1.0, 1.0], size=original.shape)
    else:
        noise = rng.standard_normal(original.shape)
        noise *= radius / max(np.abs(noise).sum(), 1e-12)
    return _finalize(original, np.clip(original + noise, 0.0, 255.0), params.norm)


def random_attack(
    triple: EvalTriple, params: AttackParams, seed: int = DEFAULT_ATTACK_SEED, index: int = 0
) -> EvalTriple:
    """Control baseline: random perturbations on the surface of the same ball."""
    if params.radius(triple.base.size) == 0:
        return triple
    rng = _triple_rng(seed, index, CONTROL_STREAM)
    return dataclasses.replace(
        triple,
        positive=_random_perturb(triple.positive, params, rng),
        negative=_random_perturb(triple.negative, params, rng),
    )


def _ordered_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def attack_all(
    triples: Sequence[EvalTriple],
    params: AttackParams,
    workers: int = 1,
    seed: int = DEFAULT_ATTACK_SEED,
) -> List[EvalTriple]:
    """Attack every triple; results match input order and do not depend on workers."""
    return _ordered_map(
        lambda pair: pgd_attack(pair[1], params, seed, pair[0]), list(enumerate(triples)), workers
    )


def random_attack_all(
    triples: Sequence[EvalTriple],
    params: AttackParams,
    workers: int = 1,
    seed: int = DEFAULT_ATTACK_SEED,
) -> List[EvalTriple]:
    return _ordered_map(
        lambda pair: random_attack(pair[1], params, seed, pair[0]),
        list(enumerate(triples)),
        workers,
    )


def attacked_roc(
    triples: Sequence[EvalTriple],
    params: AttackParams,
    score_mode: str = SCORE_SURROGATE,
    compare: CompareParams = CompareParams(),
    workers: int = 1,
    seed: int = DEFAULT_ATTACK_SEED,
) -> RocResult:
    """Attack every triple, then score exactly like clean_roc."""
    if not triples:
        raise ValueError("attacked_roc needs at least one triple")
    attacked = attack_all(triples, params, workers, seed)
    return clean_roc(attacked, score_mode, compare, params.to_dict())


def run_attack_sweep(
    triples: Sequence[EvalTriple],
    settings: AttackSettings = AttackSettings(),
    compare: CompareParams = CompareParams(),
    on_attacked: Optional[Callable[[List[EvalTriple], AttackParams], None]] = None,
) -> List[SweepRow]:
    """
    One row per (norm, epsilon): clean and attacked AUC, hash error rates, runtime,
    and the random-noise control AUC.
    """
    clean = clean_roc(triples, settings.score_mode, compare)
    logger.info("Clean AUC %.4f over %d triples", clean.auc, len(triples))
    rows = []
    for norm in settings.norms:
        for epsilon_num in settings.epsilons:
            params = settings.params_for(norm, epsilon_num)
            started = time.perf_counter()
            attacked = attack_all(triples, params, settings.workers, settings.seed)
            roc = clean_roc(attacked, settings.score_mode, compare, params.to_dict())
            seconds = time.perf_counter() - started if settings.record_timing else 0.0

            control = random_attack_all(triples, params, settings.workers, settings.seed)
            control_auc = clean_roc(control, settings.score_mode, compare).auc
            if on_attacked is not None:
                on_attacked(attacked, params)

            row = SweepRow(
                norm=norm.value,
                epsilon_num=epsilon_num,
                clean_auc=clean.auc,
                attacked_auc=roc.auc,
                hash_far=roc.hash_far,
                hash_frr=roc.hash_frr,
                seconds=seconds,
                control_auc=control_auc,
            )
            logger.info(
                "%s eps=%d/255: attacked AUC %.4f (control %.4f), hash FAR %.3f FRR %.3f",
                row.norm,
                epsilon_num,
                row.attacked_auc,
                control_auc,
                row.hash_far,
                row.hash_frr,
            )
            rows.append(row)
    return rows


def auc_curve_area(rows: Sequence[SweepRow]) -> Dict[str, float]:
    """
    Trapezoid area under attacked AUC vs epsilon (as a fraction of 255) per norm,
    with the clean AUC as the epsilon = 0 point.
    """
    areas = {}
    for norm in dict.fromkeys(row.norm for row in rows):
        points = {0: rows[0].clean_auc}
        for row in rows:
            if row.norm == norm:
                points[row.epsilon_num] = row.attacked_auc
        epsilons = sorted(points)
        x = np.array(epsilons, dtype=np.float64) / EPSILON_DENOMINATOR
        y = np.array([points[e] for e in epsilons])
        areas[norm] = float(trapezoid(y, x))
    return areas


def report_csv(rows: Sequence[SweepRow], path: PathLike) -> None:
    """Write sweep rows under the stable CSV_HEADER."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.norm,
                    row.epsilon_num,
                    repr(row.clean_auc),
                    repr(row.attacked_auc),
                    repr(row.hash_far),
                    repr(row.hash_frr),
                    repr(row.seconds),
                ]
            )
    logger.info("Wrote %d sweep rows to %s", len(rows), path)


def read_csv(path: PathLike) -> List[SweepRow]:
    """Parse a file written by report_csv."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [
            SweepRow(
                norm=norm,
                epsilon_num=int(eps),
                clean_auc=float(clean),
                attacked_auc=float(attacked),
                hash_far=float(far),
                hash_frr=float(frr),
                seconds=float(seconds),
            )
            for norm, eps, clean, attacked, far, frr, seconds in reader
        ]


def write_scores_jsonl(triples: Sequence[EvalTriple], roc: RocResult, path: PathLike) -> None:
    """Per-triple score dump, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as f:
        for i, triple in enumerate(triples):
            record = {
                "index": i,
                "transform": triple.transform,
                "base_index": triple.base_index,
                "negative_index": triple.negative_index,
                "positive_score": roc.scores[2 * i][0],
                "negative_score": roc.scores[2 * i + 1][0],
            }
            f.write(json.dumps(record) + "\n")


def save_attacked_images(
    triples: Sequence[EvalTriple], params: AttackParams, directory: PathLike, limit: int
) -> List[Path]:
    """Save attacked positives and negatives as <index>_<pos|neg>_<norm>_e<num>.png."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i, triple in enumerate(triples[:limit]):
        for tag, img in (("pos", triple.positive), ("neg", triple.negative)):
            path = directory / f"{i:04d}_{tag}_{params.norm.value}_e{params.epsilon_num}.png"
            save_png(img, path)
            written.append(path)
    return written


@dataclass(frozen=True)
class RobustnessRow:
    """Per-transform watermark robustness rates over a corpus."""

    transform: str
    detection_rate: float
    sig_ok_rate: float
    embed_ok_rate: float
    ref_rate: float
    pgws_rate: float
    psnr_mean: float
    common: bool = False

    @property
    def within_budget(self) -> bool:
        """Detection failures stay within the embedding plus channel failure rates."""
        budget = (1.0 - self.ref_rate) + (1.0 - self.pgws_rate) + BUDGET_SLACK
        return (1.0 - self.detection_rate) <= budget

    def to_csv_row(self) -> list:
        return [
            self.transform,
            repr(self.detection_rate),
            repr(self.sig_ok_rate),
            repr(self.embed_ok_rate),
            repr(self.ref_rate),
            repr(self.pgws_rate),
            repr(self.psnr_mean),
        ]


ROBUSTNESS_HEADER = (
    "transform",
    "detection_rate",
    "sig_ok_rate",
    "embed_ok_rate",
    "ref_rate",
    "pgws_rate",
    "psnr_mean",
)


def measure_robustness(
    corpus: Sequence[Image],
    suite: Sequence[TransformSpec],
    sk: SecretKey,
    scheme: RpwsScheme = RpwsScheme(),
) -> List[RobustnessRow]:
    """
    Watermark every image, apply each transform, and tally detection outcomes.

    ref_rate is the embedding's own survival rate on the unwatermarked image and
    pgws_rate the exact-message decode rate of the channel, for the same transform.
    """
    pk = sk.public_key()
    tallies = {spec.name: RateTally() for spec in suite}
    for n, img in enumerate(corpus):
        embedding = ref_embed(img)
        payload = RpwsPayload(sign(sk, embedding.to_bytes()), embedding)
        payload_bits = encode_payload(payload, scheme.channel.capacity)
        marked = scheme.embed_payload(img, payload)
        for spec in suite:
            tally = tallies[spec.name]
            transformed = apply(spec, marked)
            report = scheme.detect(pk, transformed)
            tally.add_measurement("detection", report.overall)
            tally.add_measurement("sig_ok", report.sig_ok)
            tally.add_measurement("embed_ok", report.embed_ok)
            tally.add_measurement(
                "ref", ref_compare(embedding, ref_embed(apply(spec, img)), scheme.compare_params)
            )
            tally.add_measurement(
                "pgws", np.array_equal(scheme.channel.decode(transformed), payload_bits)
            )
            tally.add_measurement("psnr", psnr(img, transformed))
        logger.debug("Robustness: image %d/%d done", n + 1, len(corpus))

    rows = []
    for spec in suite:
        tally = tallies[spec.name]
        row = RobustnessRow(
            transform=spec.name,
            detection_rate=tally.get_average("detection"),
            sig_ok_rate=tally.get_average("sig_ok"),
            embed_ok_rate=tally.get_average("embed_ok"),
            ref_rate=tally.get_average("ref"),
            pgws_rate=tally.get_average("pgws"),
            psnr_mean=tally.get_average("psnr"),
            common=spec.is_common,
        )
        if row.common:
            if row.within_budget:
                logger.info("%s: detection %.3f within budget", row.transform, row.detection_rate)
            else:
                logger.warning(
                    "%s: detection %.3f outside budget (ref %.3f, pgws %.3f)",
                    row.transform,
                    row.detection_rate,
                    row.ref_rate,
                    row.pgws_rate,
                )
        rows.append(row)
    return rows


def report_robustness_csv(rows: Sequence[RobustnessRow], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ROBUSTNESS_HEADER)
        for row in rows:
            writer.writerow(row.to_csv_row())
    logger.info("Wrote %d robustness rows to %s", len(rows), path)
