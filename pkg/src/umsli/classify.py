"""Shape-context classification with correntropy-driven affine alignment.

A silhouette becomes a normalised boundary point set; each point gets a
log-polar histogram of where the other points lie. A query is compared to
every template by cosine distance of those histograms, and by how well an
affine map fitted under the maximum correntropy criterion lines the two
point sets up. Per class, the mean of ``distance / correntropy`` ranks the
candidates; the smallest wins.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from skimage.measure import find_contours

from umsli import shapes
from umsli.errors import (
    DegenerateBoundary,
    EmptyMask,
    EmptySelection,
    FormatError,
    InvalidParam,
    SingularFit,
)
from umsli.image_io import list_images, load_mask, save_mask

MIN_POINTS = 8
DEFAULT_POINTS = 64
DEFAULT_SIGMAS: Tuple[float, ...] = (0.5, 0.25, 0.125, 0.0625)
MIN_CORRENTROPY = 1e-12
EIGHT_CONNECTED = np.ones((3, 3), dtype=int)

ClassifyMode = Literal["per_template", "aggregate"]


@dataclass(frozen=True, eq=False)
class PointSet:
    """Ordered ``(x, y)`` boundary samples, centred with unit RMS radius."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidParam(f"point set must be (N, 2), got {pts.shape}")
        if pts.shape[0] < MIN_POINTS:
            raise InvalidParam(f"point set needs at least {MIN_POINTS} points")
        if not np.all(np.isfinite(pts)):
            raise InvalidParam("point set has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return int(self.points.shape[0])


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        raise EmptyMask("mask has no foreground pixels")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def _resample(curve: np.ndarray, n: int) -> np.ndarray:
    if not np.allclose(curve[0], curve[-1]):
        curve = np.vstack([curve, curve[:1]])
    seg = np.hypot(*np.diff(curve, axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.arange(n) * arc[-1] / n
    return np.stack([np.interp(targets, arc, curve[:, 0]), np.interp(targets, arc, curve[:, 1])], axis=1)


def normalize_points(points: np.ndarray) -> np.ndarray:
    centred = points - points.mean(axis=0)
    rms = math.sqrt(float(np.mean(np.sum(centred**2, axis=1))))
    if rms <= 0:
        raise DegenerateBoundary("boundary collapses to a single point")
    return centred / rms


def extract_points(mask: np.ndarray, n: int = DEFAULT_POINTS) -> PointSet:
    """Trace the largest 8-connected component and sample ``n`` points at
    equal arc length."""
    if n < MIN_POINTS:
        raise InvalidParam(f"need at least {MIN_POINTS} sample points, got {n}")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("mask has no foreground pixels")
    comp = np.pad(_largest_component(mask), 3)
    boundary = comp & ~ndimage.binary_erosion(comp)
    if int(boundary.sum()) < MIN_POINTS:
        raise DegenerateBoundary(f"only {int(boundary.sum())} boundary pixels")
    smooth = ndimage.gaussian_filter(comp.astype(np.float64), sigma=1.0)
    contours = find_contours(smooth, 0.5)
    if not contours:
        raise DegenerateBoundary("no closed contour found")
    longest = max(contours, key=lambda c: float(np.hypot(*np.diff(c, axis=0).T).sum()))
    xy = longest[:, ::-1]  # (row, col) -> (x, y)
    return PointSet(normalize_points(_resample(xy, n)))


@dataclass(frozen=True, eq=False)
class ShapeContext:
    histograms: np.ndarray  # (N, r_bins * theta_bins) counts
    r_bins: int
    theta_bins: int

    @property
    def descriptor(self) -> np.ndarray:
        return self.histograms.ravel().astype(np.float64)


def shape_context(
    ps: Union[PointSet, np.ndarray],
    r_bins: int = 5,
    theta_bins: int = 12,
    r_inner: float = 0.125,
    r_outer: float = 2.0,
) -> ShapeContext:
    """Log-polar histograms; radii are relative to the mean pairwise distance
    and values outside ``[r_inner, r_outer]`` fall into the end bins."""
    pts = ps.points if isinstance(ps, PointSet) else np.asarray(ps, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        raise InvalidParam("shape context needs at least two points")
    if r_bins < 1 or theta_bins < 1:
        raise InvalidParam("bin counts must be positive")
    diff = pts[None, :, :] - pts[:, None, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    off = ~np.eye(n, dtype=bool)
    mean_dist = float(dist[off].mean())
    if mean_dist <= 0:
        raise InvalidParam("all points coincide")
    edges = np.logspace(math.log10(r_inner), math.log10(r_outer), r_bins + 1)
    r_idx = np.clip(np.searchsorted(edges, dist / mean_dist, side="right") - 1, 0, r_bins - 1)
    theta = np.mod(np.arctan2(diff[..., 1], diff[..., 0]), 2.0 * math.pi)
    t_idx = np.minimum((theta * theta_bins / (2.0 * math.pi)).astype(int), theta_bins - 1)
    flat = r_idx * theta_bins + t_idx
    hist = np.zeros((n, r_bins * theta_bins), dtype=np.int64)
    rows = np.repeat(np.arange(n), n).reshape(n, n)
    np.add.at(hist, (rows[off], flat[off]), 1)
    return ShapeContext(hist, r_bins, theta_bins)


def _best_cyclic_dot(hx: np.ndarray, hy: np.ndarray) -> float:
    # contours start at arbitrary points; score every rotation of the point order
    n = hx.shape[0]
    gram = hx @ hy.T
    idx = np.arange(n)
    shifted = gram[idx[:, None], (idx[:, None] + idx[None, :]) % n]
    return float(shifted.sum(axis=0).max())


def cosine_distance(scx: Union[ShapeContext, np.ndarray], scy: Union[ShapeContext, np.ndarray]) -> float:
    """``1 - cos`` between descriptors.

    Two shape contexts are compared at the cyclic shift of the boundary order
    that matches them best, so the contour start point does not matter.
    """
    a = scx.descriptor if isinstance(scx, ShapeContext) else np.ravel(scx).astype(float)
    b = scy.descriptor if isinstance(scy, ShapeContext) else np.ravel(scy).astype(float)
    if a.shape != b.shape:
        raise InvalidParam(f"descriptor sizes differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0 or nb == 0:
        return 1.0
    if isinstance(scx, ShapeContext) and isinstance(scy, ShapeContext):
        if scx.histograms.shape != scy.histograms.shape:
            raise InvalidParam("shape contexts have different layouts")
        dot = _best_cyclic_dot(scx.histograms.astype(np.float64), scy.histograms.astype(np.float64))
    else:
        dot = float(a @ b)
    return float(np.clip(1.0 - dot / (na * nb), 0.0, 2.0))


def correntropy(x: Union[PointSet, np.ndarray], y: Union[PointSet, np.ndarray], sigma: float) -> float:
    """Mean Gaussian similarity between each x and its nearest y."""
    if sigma <= 0:
        raise InvalidParam("correntropy bandwidth must be > 0")
    xp = x.points if isinstance(x, PointSet) else np.asarray(x, dtype=float)
    yp = y.points if isinstance(y, PointSet) else np.asarray(y, dtype=float)
    dist, _ = cKDTree(yp).query(xp)
    return float(np.mean(np.exp(-(dist**2) / (2.0 * sigma**2))))


def symmetric_correntropy(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """Average of the two one-sided correntropies; a set that covers only
    part of the other scores below 1."""
    return 0.5 * (correntropy(x, y, sigma) + correntropy(y, x, sigma))


@dataclass(frozen=True, eq=False)
class AffineAlignment:
    matrix: np.ndarray  # 3x3, last row [0, 0, 1], applied to column vectors (x, y, 1)
    sigma: float
    iterations: int
    correntropy: float
    history: Tuple[Tuple[float, float, float], ...]  # (sigma, before, after) per iteration

    def apply(self, points: np.ndarray) -> np.ndarray:
        return apply_affine(self.matrix, points)


def apply_affine(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    return points @ matrix[:2, :2].T + matrix[:2, 2]


def _weighted_affine(src: np.ndarray, dst: np.ndarray, weights: np.ndarray) -> np.ndarray:
    design = np.hstack([src, np.ones((src.shape[0], 1))])
    sw = np.sqrt(weights)[:, None]
    lhs = design * sw
    if np.linalg.matrix_rank(lhs) < 3:
        raise SingularFit("point configuration cannot determine an affine map")
    sol, *_ = np.linalg.lstsq(lhs, dst * sw, rcond=None)
    step = np.eye(3)
    step[:2, :] = sol.T
    if abs(np.linalg.det(step[:2, :2])) <= 1e-8:
        raise SingularFit("fitted affine map is not invertible")
    return step


def _sqrt_psd(cov: np.ndarray, inverse: bool = False) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] <= 1e-10 * max(float(vals[-1]), 1e-300):
        raise SingularFit("point set has no 2-D extent")
    scale = vals ** (-0.5 if inverse else 0.5)
    return (vecs * scale) @ vecs.T


def moment_init(xp: np.ndarray, yp: np.ndarray, angles: int = 36) -> np.ndarray:
    """Starting affine map from second moments.

    Both sets are whitened; the rotation between the whitened sets is taken
    from a grid of ``angles`` candidates by mean squared nearest-neighbour
    distance. The result maps X's mean and covariance onto Y's.
    """
    if angles < 1:
        raise InvalidParam("angles must be >= 1")
    mx, my = xp.mean(axis=0), yp.mean(axis=0)
    wx = _sqrt_psd(np.cov((xp - mx).T), inverse=True)
    wy = _sqrt_psd(np.cov((yp - my).T), inverse=True)
    zx = (xp - mx) @ wx.T
    tree = cKDTree((yp - my) @ wy.T)
    best, best_cost = np.eye(2), math.inf
    for theta in np.arange(angles) * (2.0 * math.pi / angles):
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        dist, _ = tree.query(zx @ rot.T)
        cost = float(np.mean(dist**2))
        if cost < best_cost:
            best, best_cost = rot, cost
    linear = np.linalg.solve(wy, best @ wx)
    matrix = np.eye(3)
    matrix[:2, :2] = linear
    matrix[:2, 2] = my - linear @ mx
    return matrix


def mcc_align(
    x: Union[PointSet, np.ndarray],
    y: Union[PointSet, np.ndarray],
    sigmas: Sequence[float] = DEFAULT_SIGMAS,
    max_iter: int = 10,
    tol: float = 1e-6,
    init_angles: int = 36,
) -> AffineAlignment:
    """Fit ``A`` maximising correntropy between ``XA`` and ``Y``.

    The map starts from :func:`moment_init`. Each iteration re-matches
    nearest neighbours, freezes the Gaussian weights, solves the weighted
    least-squares affine fit, and moves X. ``sigmas`` anneals the bandwidth
    from coarse to fine; a stage ends when the gain drops below ``tol`` and
    the schedule ends early once the fit is exact. The reported correntropy
    is symmetric at the finest bandwidth.
    """
    xp = x.points if isinstance(x, PointSet) else np.asarray(x, dtype=float)
    yp = y.points if isinstance(y, PointSet) else np.asarray(y, dtype=float)
    if not sigmas or any(s <= 0 for s in sigmas):
        raise InvalidParam("sigma schedule must be non-empty and positive")
    if max_iter < 1:
        raise InvalidParam("max_iter must be >= 1")
    tree = cKDTree(yp)
    matrix = moment_init(xp, yp, init_angles)
    history: List[Tuple[float, float, float]] = []
    exact = False
    for sigma in sigmas:
        two_s2 = 2.0 * sigma * sigma
        for _ in range(max_iter):
            current = apply_affine(matrix, xp)
            dist, idx = tree.query(current)
            matched = yp[idx]
            d2 = dist**2
            before = float(np.mean(np.exp(-d2 / two_s2)))
            weights = np.exp(-(d2 - d2.min()) / two_s2)
            step = _weighted_affine(current, matched, weights)
            moved = apply_affine(step, current)
            residual = np.sum((moved - matched) ** 2, axis=1)
            after = float(np.mean(np.exp(-residual / two_s2)))
            matrix = step @ matrix
            matrix[2] = (0.0, 0.0, 1.0)
            history.append((float(sigma), before, after))
            exact = float(residual.max()) < tol * tol
            if exact or after - before < tol:
                break
        if exact:
            break
    final_sigma = float(sigmas[-1])
    return AffineAlignment(
        matrix=matrix,
        sigma=final_sigma,
        iterations=len(history),
        correntropy=symmetric_correntropy(apply_affine(matrix, xp), yp, final_sigma),
        history=tuple(history),
    )


# -- template library ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Template:
    points: PointSet
    context: ShapeContext
    source: str
    mask: Optional[np.ndarray] = None


@dataclass
class TemplateLibrary:
    classes: List[str]
    templates: Dict[str, List[Template]]
    n_points: int = DEFAULT_POINTS
    r_bins: int = 5
    theta_bins: int = 12

    def __post_init__(self) -> None:
        if not self.classes:
            raise EmptySelection("template library has no classes")
        for name in self.classes:
            if not self.templates.get(name):
                raise EmptySelection(f"class {name!r} has no templates")

    @classmethod
    def from_masks(
        cls,
        masks: Mapping[str, Sequence[Tuple[np.ndarray, str]]],
        n_points: int = DEFAULT_POINTS,
        r_bins: int = 5,
        theta_bins: int = 12,
    ) -> "TemplateLibrary":
        templates: Dict[str, List[Template]] = {}
        for name, entries in masks.items():
            items = []
            for mask, source in entries:
                pts = extract_points(mask, n_points)
                descriptor = shape_context(pts, r_bins, theta_bins)
                items.append(Template(pts, descriptor, source, np.asarray(mask, dtype=bool)))
            templates[name] = items
        return cls(list(masks), templates, n_points, r_bins, theta_bins)

    @classmethod
    def load(
        cls, directory: Path, n_points: int = DEFAULT_POINTS, r_bins: int = 5, theta_bins: int = 12
    ) -> "TemplateLibrary":
        """Read ``index.csv`` (``class,path,source``) or, failing that, one
        sub-directory of silhouettes per class."""
        directory = Path(directory)
        masks: Dict[str, List[Tuple[np.ndarray, str]]] = {}
        index = directory / "index.csv"
        if index.exists():
            with index.open(newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    try:
                        name, rel = row["class"], row["path"]
                    except KeyError as exc:
                        raise FormatError(f"{index}: missing column {exc.args[0]!r}") from exc
                    masks.setdefault(name, []).append(
                        (load_mask(directory / rel), row.get("source") or rel)
                    )
        else:
            for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
                files = list_images(sub)
                if files:
                    masks[sub.name] = [(load_mask(f), f"{sub.name}/{f.name}") for f in files]
        if not masks:
            raise EmptySelection(f"no templates found in {directory}")
        return cls.from_masks(masks, n_points, r_bins, theta_bins)

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        rows = []
        for name in self.classes:
            for i, tpl in enumerate(self.templates[name]):
                if tpl.mask is None:
                    raise InvalidParam("templates without a mask cannot be saved")
                rel = f"{name}/{i:03d}.png"
                save_mask(directory / rel, tpl.mask)
                rows.append({"class": name, "path": rel, "source": tpl.source})
        with (directory / "index.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=("class", "path", "source"))
            writer.writeheader()
            writer.writerows(rows)

    def subset(self, selection: Mapping[str, Sequence[int]]) -> "TemplateLibrary":
        templates = {}
        for name in self.classes:
            chosen = list(selection.get(name, ()))
            if not chosen:
                raise EmptySelection(f"selection for class {name!r} is empty")
            templates[name] = [self.templates[name][i] for i in chosen]
        return TemplateLibrary(list(self.classes), templates, self.n_points, self.r_bins, self.theta_bins)

    def __len__(self) -> int:
        return sum(len(v) for v in self.templates.values())


SYNTHETIC_CLASSES: Tuple[str, ...] = ("turtle", "amberjack", "barracuda")


def synthetic_masks(
    kind: str,
    count: int,
    rng: np.random.Generator,
    size: float = 44.0,
    canvas: int = 64,
    max_rotation: float = 30.0,
    min_squash: float = 0.7,
    noise: float = 0.0,
    occlusion: float = 0.0,
) -> List[np.ndarray]:
    """Silhouettes of one kind under random rotation and foreshortening."""
    out = []
    for _ in range(count):
        mask = shapes.render_silhouette(
            kind,
            size * float(rng.uniform(0.85, 1.0)),
            rotation_deg=float(rng.uniform(-max_rotation, max_rotation)),
            squash=float(rng.uniform(min_squash, 1.0)),
            canvas=canvas,
        )
        if noise > 0 or occlusion > 0:
            mask = shapes.perturb_silhouette(mask, rng, noise, occlusion)
        out.append(mask)
    return out


def synthetic_library(
    classes: Sequence[str] = SYNTHETIC_CLASSES,
    per_class: int = 20,
    seed: int = 0,
    n_points: int = DEFAULT_POINTS,
    min_squash: float = 0.7,
) -> TemplateLibrary:
    rng = np.random.default_rng(seed)
    masks = {
        kind: [
            (m, f"synthetic:{kind}:{i}")
            for i, m in enumerate(synthetic_masks(kind, per_class, rng, min_squash=min_squash))
        ]
        for kind in classes
    }
    return TemplateLibrary.from_masks(masks, n_points)


def synthetic_queries(
    classes: Sequence[str] = SYNTHETIC_CLASSES,
    per_class: int = 50,
    seed: int = 1,
    noise: float = 0.05,
    occlusion: float = 0.1,
) -> List[Tuple[np.ndarray, str]]:
    rng = np.random.default_rng(seed)
    queries = []
    for kind in classes:
        for mask in synthetic_masks(kind, per_class, rng, noise=noise, occlusion=occlusion):
            queries.append((mask, kind))
    return queries


def load_queries(directory: Path) -> List[Tuple[np.ndarray, str]]:
    """Labelled query masks: one sub-directory per true class."""
    queries = []
    for sub in sorted(p for p in Path(directory).iterdir() if p.is_dir()):
        queries.extend((load_mask(f), sub.name) for f in list_images(sub))
    if not queries:
        raise EmptySelection(f"no query masks found in {directory}")
    return queries


# -- classification ----------------------------------------------------------


@dataclass
class ClassScore:
    classes: List[str]
    distances: List[float]  # mean descriptor distance per class
    correntropies: List[float]  # mean alignment correntropy per class
    combined: List[float]  # ranking score per class
    predicted: str
    predicted_index: int
    tie: bool = False
    per_template: List[Tuple[str, str, float, float]] = field(default_factory=list)


def class_distance(query: ShapeContext, library: TemplateLibrary, j: Union[int, str]) -> float:
    name = library.classes[j] if isinstance(j, int) else j
    items = library.templates[name]
    return float(np.mean([cosine_distance(query, t.context) for t in items]))


def classify(
    query: Union[np.ndarray, PointSet],
    library: TemplateLibrary,
    sigmas: Sequence[float] = DEFAULT_SIGMAS,
    mode: ClassifyMode = "per_template",
    use_correntropy: bool = True,
    max_iter: int = 10,
) -> ClassScore:
    """Rank classes by mean ``d_ij / c_ij`` (or ``mean d / mean c`` in
    aggregate mode, or plain mean distance without correntropy)."""
    if mode not in ("per_template", "aggregate"):
        raise InvalidParam(f"unknown classify mode {mode!r}")
    pts = query if isinstance(query, PointSet) else extract_points(query, library.n_points)
    sc = shape_context(pts, library.r_bins, library.theta_bins)

    distances, corrs, combined = [], [], []
    detail: List[Tuple[str, str, float, float]] = []
    for name in library.classes:
        ds, cs = [], []
        for tpl in library.templates[name]:
            d = cosine_distance(sc, tpl.context)
            c = 1.0
            if use_correntropy:
                try:
                    c = mcc_align(pts, tpl.points, sigmas, max_iter).correntropy
                except SingularFit:
                    c = MIN_CORRENTROPY
                c = max(c, MIN_CORRENTROPY)
            ds.append(d)
            cs.append(c)
            detail.append((name, tpl.source, d, c))
        d_arr, c_arr = np.array(ds), np.array(cs)
        distances.append(float(d_arr.mean()))
        corrs.append(float(c_arr.mean()))
        if not use_correntropy:
            combined.append(float(d_arr.mean()))
        elif mode == "per_template":
            combined.append(float(np.mean(d_arr / c_arr)))
        else:
            combined.append(float(d_arr.mean() / c_arr.mean()))

    scores = np.array(combined)
    best = float(scores.min())
    winners = np.flatnonzero(np.isclose(scores, best, rtol=0.0, atol=1e-12))
    index = int(winners[0])
    return ClassScore(
        classes=list(library.classes),
        distances=distances,
        correntropies=corrs,
        combined=combined,
        predicted=library.classes[index],
        predicted_index=index,
        tie=len(winners) > 1,
        per_template=detail,
    )


@dataclass
class ConfusionResult:
    classes: List[str]
    matrix: np.ndarray  # rows true class, columns predicted
    failures: int = 0

    @property
    def rates(self) -> List[float]:
        totals = self.matrix.sum(axis=1)
        return [float(self.matrix[i, i] / totals[i]) if totals[i] else 0.0 for i in range(len(self.classes))]

    @property
    def accuracy(self) -> float:
        total = self.matrix.sum()
        return float(np.trace(self.matrix) / total) if total else 0.0


def confusion_matrix(
    library: TemplateLibrary,
    queries: Sequence[Tuple[Union[np.ndarray, PointSet], str]],
    **classify_kwargs,
) -> ConfusionResult:
    """Classify each ``(query, true_class)``; unusable queries count as failures."""
    index = {name: i for i, name in enumerate(library.classes)}
    matrix = np.zeros((len(index), len(index)), dtype=np.int64)
    failures = 0
    for query, truth in queries:
        if truth not in index:
            raise InvalidParam(f"query class {truth!r} not in library")
        try:
            score = classify(query, library, **classify_kwargs)
        except (EmptyMask, DegenerateBoundary):
            failures += 1
            continue
        matrix[index[truth], score.predicted_index] += 1
    return ConfusionResult(list(library.classes), matrix, failures)


def write_confusion(path: Path, result: ConfusionResult) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\predicted", *result.classes, "rate"])
        for i, name in enumerate(result.classes):
            writer.writerow([name, *result.matrix[i].tolist(), f"{result.rates[i]:.6f}"])


def write_score(path: Path, score: ClassScore) -> None:
    """One row per class: ``class,distance,correntropy,score,predicted``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "distance", "correntropy", "score", "predicted"])
        for i, name in enumerate(score.classes):
            writer.writerow(
                [
                    name,
                    f"{score.distances[i]:.6f}",
                    f"{score.correntropies[i]:.6f}",
                    f"{score.combined[i]:.6f}",
                    int(i == score.predicted_index),
                ]
            )


@dataclass
class BenchmarkSummary:
    accuracy: float
    confusion: ConfusionResult
    descriptor_only_accuracy: float


def classification_benchmark(
    per_class: int = 20,
    queries_per_class: int = 50,
    seed: int = 0,
    classes: Sequence[str] = SYNTHETIC_CLASSES,
) -> BenchmarkSummary:
    library = synthetic_library(classes, per_class, seed)
    queries = synthetic_queries(classes, queries_per_class, seed + 1)
    full = confusion_matrix(library, queries)
    plain = confusion_matrix(library, queries, use_correntropy=False)
    return BenchmarkSummary(full.accuracy, full, plain.accuracy)
