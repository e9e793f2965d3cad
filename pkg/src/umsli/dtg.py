"""Divergence-to-go template selection.

Templates of one class become MDP states (their Hu moments). Acting moves
between states on a fixed cyclic rule; the "reward" at a state-action pair
is how much this class's next-state density differs from the other classes'
densities (Cauchy-Schwarz divergence between kernel density estimates).
Kernel temporal-difference learning estimates the discounted sum of those
divergences; the most visited states under the learned policy are the
templates worth keeping. A state with no other-class transition nearby
scores the maximum divergence. Random and k-means/L1 selections are the
baselines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import logsumexp, softmax
from skimage.measure import moments_central, moments_hu, moments_normalized
from sklearn.cluster import KMeans

from umsli.classify import (
    ConfusionResult,
    TemplateLibrary,
    confusion_matrix,
    cosine_distance,
    synthetic_library,
    synthetic_queries,
)
from umsli.errors import (
    EmptyMask,
    EmptyModel,
    EmptySelection,
    FormatError,
    InvalidDiscount,
    InvalidParam,
    NoSupport,
)

HU_SCALE = 1e7
DEFAULT_ACTIONS: Tuple[int, ...] = tuple(range(-10, 0)) + tuple(range(1, 11))
DEFAULT_D_MAX = 10.0
DEFAULT_SUPPORT = 4.0  # bandwidths

Method = Literal["dtg", "random", "kmeans"]


def hu_moments(mask: np.ndarray) -> np.ndarray:
    """Seven Hu invariants, signed-log mapped.

    Second-order central moments include the within-pixel variance
    (``m00 / 12``), so an integer upscaling of a mask leaves the invariants
    unchanged.
    """
    img = np.asarray(mask, dtype=np.float64)
    if img.ndim != 2 or not img.any():
        raise EmptyMask("Hu moments need a non-empty 2-D mask")
    mu = moments_central(img, order=3)
    mu[2, 0] += mu[0, 0] / 12.0
    mu[0, 2] += mu[0, 0] / 12.0
    hu = moments_hu(moments_normalized(mu, order=3))
    return np.sign(hu) * np.log1p(np.abs(hu) * HU_SCALE)


@dataclass(frozen=True, eq=False)
class TemplateMdp:
    states: np.ndarray  # (n, 7) HuStates
    actions: Tuple[int, ...] = DEFAULT_ACTIONS
    template_indices: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        states = np.array(self.states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] < 2:
            raise InvalidParam("an MDP needs at least two states")
        if not self.actions or 0 in self.actions:
            raise InvalidParam("actions must be non-empty and exclude 0")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if not self.template_indices:
            object.__setattr__(self, "template_indices", tuple(range(states.shape[0])))

    @property
    def n_states(self) -> int:
        return int(self.states.shape[0])

    def next_state(self, state: int, action: int) -> int:
        return (action + state) % self.n_states


def silverman_bandwidth(samples: np.ndarray) -> np.ndarray:
    """Per-dimension Silverman bandwidths."""
    n, d = samples.shape
    spread = np.std(samples, axis=0, ddof=1) if n > 1 else np.zeros(d)
    spread = np.maximum(spread, 1e-6)
    return spread * (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))


@dataclass(frozen=True, eq=False)
class TransitionModel:
    """Stored rollout tuples ``[x_i, x_{i+1}, a, r]``."""

    states: np.ndarray
    next_states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    bandwidth: Union[float, np.ndarray]  # scalar or one per state dimension

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    @classmethod
    def from_arrays(cls, states, next_states, actions, rewards=None) -> "TransitionModel":
        states = np.asarray(states, dtype=np.float64)
        next_states = np.asarray(next_states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.int64)
        if actions.size == 0:
            raise EmptyModel("transition model has no samples")
        rewards = np.zeros(actions.shape) if rewards is None else np.asarray(rewards, dtype=float)
        return cls(states, next_states, actions, rewards, silverman_bandwidth(next_states))

    @classmethod
    def concatenate(cls, models: Sequence["TransitionModel"]) -> "TransitionModel":
        if not models:
            raise EmptyModel("nothing to concatenate")
        return cls.from_arrays(
            np.concatenate([m.states for m in models]),
            np.concatenate([m.next_states for m in models]),
            np.concatenate([m.actions for m in models]),
            np.concatenate([m.rewards for m in models]),
        )


def build_transition_model(mdp: TemplateMdp, steps: int = 5000, seed: int = 0) -> TransitionModel:
    """Random-policy rollout; the reward slot is always 0."""
    if steps <= 0:
        raise EmptyModel("rollout length must be positive")
    rng = np.random.default_rng(seed)
    state = int(rng.integers(mdp.n_states))
    actions = np.asarray(mdp.actions)[rng.integers(len(mdp.actions), size=steps)]
    frm = np.empty(steps, dtype=np.int64)
    to = np.empty(steps, dtype=np.int64)
    for t, a in enumerate(actions):
        frm[t] = state
        state = mdp.next_state(state, int(a))
        to[t] = state
    return TransitionModel.from_arrays(mdp.states[frm], mdp.states[to], actions)


def _conditional_log_weights(
    model: TransitionModel, x: np.ndarray, action: int, h: np.ndarray, support: float
) -> Tuple[np.ndarray, np.ndarray]:
    # coordinates are already divided by the bandwidth
    picked = model.actions == action
    if not picked.any():
        raise NoSupport(f"no stored transitions with action {action}")
    d2 = np.sum((model.states[picked] / h - x) ** 2, axis=1)
    nearest = float(d2.min())
    if nearest > support * support:
        raise NoSupport(f"no stored transition within {support} bandwidths for action {action}")
    logw = -(d2 - nearest) / 2.0
    return logw - logsumexp(logw), picked


def _log_overlap(ma: np.ndarray, la: np.ndarray, mb: np.ndarray, lb: np.ndarray) -> float:
    d2 = cdist(ma, mb, "sqeuclidean")
    return float(logsumexp(la[:, None] + lb[None, :] - d2 / 4.0))


def divergence(
    own: TransitionModel,
    other: TransitionModel,
    x: np.ndarray,
    action: int,
    d_max: float = DEFAULT_D_MAX,
    strict: bool = False,
    support: float = DEFAULT_SUPPORT,
) -> float:
    """Cauchy-Schwarz divergence of next-state densities conditioned near ``(x, a)``.

    Both densities are Gaussian mixtures over stored next states with a
    shared diagonal bandwidth, so
    ``D = -2 log<p,q> + log<p,p> + log<q,q>`` is closed form; two point
    masses at distance ``d`` give ``d**2 / (2 h**2)``. The result is capped
    at ``d_max``. ``d_max`` is also returned when a model has no transition
    with ``action`` from within ``support`` bandwidths of ``x``, unless
    ``strict`` is set.
    """
    h = np.sqrt((np.square(own.bandwidth) + np.square(other.bandwidth)) / 2.0)
    xs = np.asarray(x, dtype=np.float64) / h
    try:
        lp, pp = _conditional_log_weights(own, xs, action, h, support)
        lq, pq = _conditional_log_weights(other, xs, action, h, support)
    except NoSupport:
        if strict:
            raise
        return d_max
    mp = own.next_states[pp] / h
    mq = other.next_states[pq] / h
    value = -2.0 * _log_overlap(mp, lp, mq, lq) + _log_overlap(mp, lp, mp, lp) + _log_overlap(mq, lq, mq, lq)
    return float(min(max(value, 0.0), d_max))


def divergence_table(
    mdp: TemplateMdp,
    own: TransitionModel,
    other: TransitionModel,
    d_max: float = DEFAULT_D_MAX,
    support: float = DEFAULT_SUPPORT,
) -> np.ndarray:
    """``D[state, action_index]``."""
    table = np.empty((mdp.n_states, len(mdp.actions)))
    for s in range(mdp.n_states):
        for j, a in enumerate(mdp.actions):
            table[s, j] = divergence(own, other, mdp.states[s], a, d_max, support=support)
    return table


@dataclass(frozen=True, eq=False)
class DtgFunction:
    """``dtg(x, a) = d0 + sum_j coeffs[j, a] * k(x, states[j])``.

    ``coeffs`` already includes the step size; ``k`` is a Gaussian
    correntropy kernel of width ``sigma`` between HuStates.
    """

    d0: float
    alpha: float
    states: np.ndarray
    actions: Tuple[int, ...]
    coeffs: np.ndarray
    sigma: float

    def kernel(self, x: np.ndarray) -> np.ndarray:
        d2 = np.sum((self.states - np.asarray(x, dtype=float)) ** 2, axis=1)
        return np.exp(-d2 / (2.0 * self.sigma**2))

    def values(self, x: np.ndarray) -> np.ndarray:
        return self.d0 + self.kernel(x) @ self.coeffs

    def __call__(self, x: np.ndarray, action: int) -> float:
        return float(self.values(x)[self.actions.index(action)])


@dataclass
class SelectionResult:
    method: str
    indices: Tuple[int, ...]
    visits: Optional[np.ndarray] = None
    chosen_visits: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(set(self.indices)) != len(self.indices):
            raise InvalidParam("selected indices must be distinct")


def median_pairwise(states: np.ndarray) -> float:
    dists = pdist(np.asarray(states, dtype=float))
    med = float(np.median(dists)) if dists.size else 0.0
    return med if med > 0 else 1.0


def train_dtg(
    mdp: TemplateMdp,
    table: np.ndarray,
    n_select: int = 10,
    steps: int = 2000,
    episodes: int = 1,
    gamma: float = 0.9,
    alpha: float = 0.1,
    d0: float = 0.0,
    epsilon: float = 0.1,
    kernel_sigma: Optional[float] = None,
    seed: int = 0,
    temperature: Optional[float] = None,
) -> Tuple[DtgFunction, SelectionResult]:
    """Kernel TD learning of divergence-to-go with an epsilon-greedy policy.

    Every step adds a kernel centre at the visited state for the taken action
    with coefficient ``alpha * delta``; centres at the same state are merged.
    ``gamma`` must lie in [0, 1). With ``temperature`` set, the non-random
    step samples actions from a softmax over dtg whose temperature is that
    fraction of the current row's value spread; visit counts then follow the
    learned values.
    """
    if not 0.0 <= gamma < 1.0:
        raise InvalidDiscount(f"discount must be in [0, 1), got {gamma}")
    table = np.asarray(table, dtype=np.float64)
    if table.shape != (mdp.n_states, len(mdp.actions)):
        raise InvalidParam(f"divergence table shape {table.shape} does not match the MDP")
    if steps < 1 or episodes < 1:
        raise InvalidParam("steps and episodes must be >= 1")
    if not 1 <= n_select <= mdp.n_states:
        raise InvalidParam(f"cannot select {n_select} of {mdp.n_states} states")
    if temperature is not None and temperature <= 0:
        raise InvalidParam("temperature must be > 0")

    rng = np.random.default_rng(seed)
    sigma = float(kernel_sigma) if kernel_sigma else median_pairwise(mdp.states)
    d2 = cdist(mdp.states, mdp.states, "sqeuclidean")
    gram = np.exp(-d2 / (2.0 * sigma**2))
    n_actions = len(mdp.actions)
    coeffs = np.zeros((mdp.n_states, n_actions))
    values = np.full((mdp.n_states, n_actions), d0)  # cached dtg at every state
    visits = np.zeros(mdp.n_states, dtype=np.int64)

    for _ in range(episodes):
        state = int(rng.integers(mdp.n_states))
        for _ in range(steps):
            visits[state] += 1
            row = values[state]
            spread = float(row.max() - row.min())
            if rng.random() < epsilon:
                j = int(rng.integers(n_actions))
            elif temperature is not None and spread > 0:
                logits = (row - row.max()) / (temperature * spread)
                j = int(rng.choice(n_actions, p=softmax(logits)))
            else:
                j = int(rng.choice(np.flatnonzero(row == row.max())))
            nxt = mdp.next_state(state, mdp.actions[j])
            delta = table[state, j] + gamma * values[nxt].max() - row[j]
            coeffs[state, j] += alpha * delta
            values[:, j] += alpha * delta * gram[:, state]
            state = nxt

    fn = DtgFunction(float(d0), float(alpha), mdp.states, mdp.actions, coeffs, sigma)
    order = np.argsort(-visits, kind="stable")[:n_select]
    chosen = tuple(int(mdp.template_indices[i]) for i in order)
    return fn, SelectionResult("dtg", chosen, visits, tuple(int(visits[i]) for i in order))


def kmeans_select(
    matrix: np.ndarray, k: int = 10, per_cluster: int = 1, seed: int = 0
) -> SelectionResult:
    """Cluster the rows of a pairwise template matrix; keep the least-L1-norm
    member(s) of each cluster. On a distance matrix those are the templates
    closest to all others."""
    rows = np.asarray(matrix, dtype=np.float64)
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise InvalidParam(f"k must be in 1..{n}, got {k}")
    if per_cluster < 1:
        raise InvalidParam("per_cluster must be >= 1")
    labels = KMeans(n_clusters=k, n_init=10, random_state=seed).fit_predict(rows)
    l1 = np.abs(rows).sum(axis=1)
    chosen: List[int] = []
    for label in range(k):
        members = np.flatnonzero(labels == label)
        ranked = sorted(members.tolist(), key=lambda i: (l1[i], i))
        chosen.extend(ranked[:per_cluster])
    return SelectionResult("kmeans", tuple(sorted(chosen)))


def random_select(n_total: int, n: int, seed: int = 0) -> SelectionResult:
    if not 1 <= n <= n_total:
        raise InvalidParam(f"cannot select {n} of {n_total} templates")
    rng = np.random.default_rng(seed)
    return SelectionResult("random", tuple(sorted(int(i) for i in rng.choice(n_total, n, replace=False))))


def distance_matrix(library: TemplateLibrary, name: str) -> np.ndarray:
    """Shape-context cosine distance between every pair of templates."""
    items = library.templates[name]
    n = len(items)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = cosine_distance(items[i].context, items[j].context)
    return dist


def class_mdp(
    library: TemplateLibrary, name: str, clusters: int = 10, per_cluster: int = 2, seed: int = 0
) -> TemplateMdp:
    """States are the k-means representatives of one class's templates."""
    items = library.templates[name]
    if any(t.mask is None for t in items):
        raise InvalidParam("DTG selection needs template masks")
    k = min(clusters, len(items))
    reps = kmeans_select(distance_matrix(library, name), k, per_cluster, seed).indices
    states = np.stack([hu_moments(items[i].mask) for i in reps])  # type: ignore[arg-type]
    return TemplateMdp(states, template_indices=reps)


@dataclass
class DtgSettings:
    model_steps: int = 5000
    steps: int = 2000
    episodes: int = 1
    gamma: float = 0.9
    alpha: float = 0.1
    d0: float = 0.0
    epsilon: float = 0.1
    d_max: float = DEFAULT_D_MAX
    clusters: int = 10
    per_cluster: int = 2
    temperature: Optional[float] = 0.25
    support: float = DEFAULT_SUPPORT


def select_templates(
    library: TemplateLibrary,
    method: Method,
    n: int = 10,
    seed: int = 0,
    settings: Optional[DtgSettings] = None,
) -> Dict[str, SelectionResult]:
    """Pick ``n`` templates per class; DTG trains each class against the
    concatenated transition models of all other classes."""
    if method == "random":
        return {
            name: random_select(len(library.templates[name]), n, seed + i)
            for i, name in enumerate(library.classes)
        }
    if method == "kmeans":
        return {
            name: kmeans_select(distance_matrix(library, name), n, 1, seed)
            for name in library.classes
        }
    if method != "dtg":
        raise InvalidParam(f"unknown selection method {method!r}")
    if len(library.classes) < 2:
        raise InvalidParam("DTG selection needs at least two classes")

    cfg = settings or DtgSettings()
    mdps = {
        name: class_mdp(library, name, cfg.clusters, cfg.per_cluster, seed)
        for name in library.classes
    }
    models = {
        name: build_transition_model(mdps[name], cfg.model_steps, seed + i)
        for i, name in enumerate(library.classes)
    }
    out: Dict[str, SelectionResult] = {}
    for i, name in enumerate(library.classes):
        others = TransitionModel.concatenate([models[o] for o in library.classes if o != name])
        table = divergence_table(mdps[name], models[name], others, cfg.d_max, cfg.support)
        _, result = train_dtg(
            mdps[name],
            table,
            n_select=min(n, mdps[name].n_states),
            steps=cfg.steps,
            episodes=cfg.episodes,
            gamma=cfg.gamma,
            alpha=cfg.alpha,
            d0=cfg.d0,
            epsilon=cfg.epsilon,
            seed=seed + i,
            temperature=cfg.temperature,
        )
        out[name] = result
    return out


def evaluate_selection(
    library: TemplateLibrary,
    selection: Mapping[str, Sequence[int]],
    queries: Sequence[Tuple[np.ndarray, str]],
    **classify_kwargs,
) -> ConfusionResult:
    if not selection or not any(selection.values()):
        raise EmptySelection("no templates selected")
    return confusion_matrix(library.subset(selection), queries, **classify_kwargs)


SELECTION_COLUMNS = ("class", "index", "source", "method", "visits")


def write_selection(path: Path, library: TemplateLibrary, selection: Mapping[str, SelectionResult]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SELECTION_COLUMNS)
        writer.writeheader()
        for name in library.classes:
            result = selection[name]
            for pos, idx in enumerate(result.indices):
                visits = result.chosen_visits[pos] if result.chosen_visits else ""
                writer.writerow(
                    {
                        "class": name,
                        "index": idx,
                        "source": library.templates[name][idx].source,
                        "method": result.method,
                        "visits": visits,
                    }
                )


def read_selection(path: Path) -> Dict[str, List[int]]:
    out: Dict[str, List[int]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                out.setdefault(row["class"], []).append(int(row["index"]))
            except (KeyError, ValueError) as exc:
                raise FormatError(f"{path}: malformed selection row {row}") from exc
    if not out:
        raise EmptySelection(f"{path} selects no templates")
    return out


@dataclass
class SeedOutcome:
    seed: int
    accuracy: Dict[str, float] = field(default_factory=dict)


def selection_benchmark(
    seeds: Sequence[int] = tuple(range(10)),
    classes: Sequence[str] = ("turtle", "amberjack", "barracuda"),
    per_class: int = 40,
    queries_per_class: int = 20,
    n: int = 10,
    settings: Optional[DtgSettings] = None,
    template_squash: float = 0.5,
) -> List[SeedOutcome]:
    """Per-seed classification accuracy of DTG, random and k-means selections.

    Library templates are foreshortened down to ``template_squash`` (views
    from well off the side); queries keep the default near-side views.
    """
    outcomes = []
    for seed in seeds:
        library = synthetic_library(classes, per_class, seed, min_squash=template_squash)
        queries = synthetic_queries(classes, queries_per_class, seed + 1000)
        outcome = SeedOutcome(seed)
        for method in ("dtg", "random", "kmeans"):
            chosen = select_templates(library, method, n, seed, settings)  # type: ignore[arg-type]
            result = evaluate_selection(
                library, {k: v.indices for k, v in chosen.items()}, queries
            )
            outcome.accuracy[method] = result.accuracy
        outcomes.append(outcome)
    return outcomes
