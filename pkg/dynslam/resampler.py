"""Keypoint resampling.

An autoencoder compresses each six-attribute keypoint (x, y, d, theta, sigma, lambda) to a
2-D latent point; latent DBSCAN with a quantile-adaptive radius finds groups of similar
keypoints, and a genetic algorithm thins every group to a spatially spread subset. Points
DBSCAN labels as noise are kept as they are.
"""
import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform

from .clustering import NOISE, dbscan
from .defs.params import ResampleConfig
from .defs.records import KEYPOINT_FIELDS, KP_SIGMA, KP_THETA, KP_X, KP_Y
from .utils import get_logger

logger = get_logger(__name__)

N_MIN = len(KEYPOINT_FIELDS) + 1

UNIFORM, CLUSTERED, REMOVED = 0, 1, 2
CATEGORY_COLORS = {UNIFORM: (0, 255, 0), CLUSTERED: (0, 0, 255), REMOVED: (255, 0, 0)}
"""overlay colors in RGB order"""


def normalize_keypoints(keypoints: np.ndarray) -> np.ndarray:
    """per-attribute min-max scaling to [0, 1]; constant attributes and unset theta (-1) map to 0

    >>> normalize_keypoints(np.array([[0, 10, 7, -1, 1, 0], [4, 10, 7, 90, 3, 1]])).tolist()
    [[0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0, 1.0, 1.0]]
    """
    kps = np.asarray(keypoints, dtype=np.float64).reshape(-1, len(KEYPOINT_FIELDS))
    out = np.zeros_like(kps)
    for col in range(kps.shape[1]):
        values = kps[:, col]
        valid = values >= 0 if col == KP_THETA else np.ones(len(values), dtype=bool)
        if not valid.any():
            continue
        lo, hi = values[valid].min(), values[valid].max()
        if hi > lo:
            out[valid, col] = (values[valid] - lo) / (hi - lo)
    return out


class Autoencoder:
    """fully connected 6-4-2-4-6 autoencoder, tanh hidden layers, linear output

    Weights are drawn from uniform(-0.5, 0.5) / sqrt(fan_in) with a seeded generator and
    biases start at zero, so initialization does not depend on the training data.
    """

    def __init__(self, sizes: tuple[int, ...] = (6, 4, 2, 4, 6), seed: int = 0):
        if len(sizes) < 3 or sizes[0] != sizes[-1]:
            raise ValueError(f"layer sizes {sizes} do not describe an autoencoder")
        self.sizes = tuple(sizes)
        self.latent_layer = int(np.argmin(sizes))
        rng = np.random.default_rng(seed)
        self.weights = [rng.uniform(-0.5, 0.5, (n_in, n_out)) / math.sqrt(n_in)
                        for n_in, n_out in zip(sizes[:-1], sizes[1:])]
        self.biases = [np.zeros(n_out) for n_out in sizes[1:]]

    def _activations(self, x: np.ndarray) -> list[np.ndarray]:
        acts = [x]
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            acts.append(z if layer == last else np.tanh(z))
        return acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        """reconstruction g_u(f_w(x)) of normalized inputs"""
        return self._activations(x)[-1]

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self._activations(x)[self.latent_layer]

    def loss_and_grad(self, x: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """summed squared reconstruction error and its gradients w.r.t. weights and biases"""
        acts = self._activations(x)
        residual = acts[-1] - x
        loss = float(np.sum(residual * residual))
        grad_w = [np.zeros_like(w) for w in self.weights]
        grad_b = [np.zeros_like(b) for b in self.biases]
        delta = 2.0 * residual
        for layer in range(len(self.weights) - 1, -1, -1):
            grad_w[layer] = acts[layer].T @ delta
            grad_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (1.0 - acts[layer] ** 2)
        return loss, grad_w, grad_b

    def loss(self, x: np.ndarray) -> float:
        residual = self.forward(x) - x
        return float(np.sum(residual * residual))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.reshape(-1) for pair in zip(self.weights, self.biases)
                               for p in pair])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.get_flat().size:
            raise ValueError(f"expected {self.get_flat().size} parameters, got {flat.size}")
        offset = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[offset:offset + w.size].reshape(w.shape).copy()
            offset += w.size
            self.biases[i] = flat[offset:offset + b.size].copy()
            offset += b.size

    def flat_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        loss, grad_w, grad_b = self.loss_and_grad(x)
        return loss, np.concatenate([g.reshape(-1) for pair in zip(grad_w, grad_b)
                                     for g in pair])

    def train(self, x: np.ndarray, epochs: int, learning_rate: float) -> list[float]:
        """full-batch gradient descent with batch-averaged steps

        Returns:
            the loss before every epoch and after the last one (epochs + 1 values)

        Raises:
            FloatingPointError: the loss became non-finite
        """
        n = max(len(x), 1)
        losses = []
        for epoch in range(epochs):
            loss, grad_w, grad_b = self.loss_and_grad(x)
            if not np.isfinite(loss):
                raise FloatingPointError(f"autoencoder loss is {loss} at epoch {epoch}")
            losses.append(loss)
            for i in range(len(self.weights)):
                self.weights[i] -= learning_rate * grad_w[i] / n
                self.biases[i] -= learning_rate * grad_b[i] / n
        final = self.loss(x)
        if not np.isfinite(final):
            raise FloatingPointError(f"autoencoder loss is {final} after epoch {epochs}")
        losses.append(final)
        return losses


def train_autoencoder(keypoints: np.ndarray, cfg: ResampleConfig,
                      model: Autoencoder | None = None
                      ) -> tuple[Autoencoder, np.ndarray, list[float]]:
    """train on normalized keypoints; returns the model, latent points and loss history

    A `model` passed in (warm start) continues training from its current weights.
    """
    if len(keypoints) < 2:
        raise ValueError("training needs at least two keypoints")
    x = normalize_keypoints(keypoints)
    if model is None:
        model = Autoencoder((len(KEYPOINT_FIELDS), cfg.hidden, cfg.latent, cfg.hidden,
                             len(KEYPOINT_FIELDS)), seed=cfg.seed)
    losses = model.train(x, cfg.epochs, cfg.learning_rate)
    logger.debug("autoencoder loss %.6g -> %.6g over %d epochs", losses[0], losses[-1],
                 cfg.epochs)
    return model, model.encode(x), losses


def _quantile_index(length: int, q: float) -> int:
    return min(int(math.floor(length * q + 1e-12)), length - 1)


def adaptive_radius(latents: np.ndarray, cfg: ResampleConfig) -> float:
    """DBSCAN radius from the sorted pairwise squared latent distances

    Starts at quantile q0 and advances by q_step while the radius is 0 and the quantile
    has not passed q_cap.

    >>> adaptive_radius(np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]]), ResampleConfig())
    1.0
    """
    distances = np.sort(pdist(np.asarray(latents, dtype=np.float64), "sqeuclidean"))
    if len(distances) == 0:
        return 0.0
    q = cfg.q0
    r = float(distances[_quantile_index(len(distances), q)])
    while r == 0 and q <= cfg.q_cap:
        q = round(q + cfg.q_step, 10)
        r = float(distances[_quantile_index(len(distances), q)])
    return r


def subset_size(count: int, ratio: float) -> int:
    """
    >>> subset_size(2, 0.5), subset_size(7, 0.5)
    (1, 4)
    """
    return max(1, math.ceil(ratio * count - 1e-12))


class SubsetFitness:
    """maximin image-space dispersion of a fixed-size subset, tie-broken by summed response"""

    def __init__(self, cluster: np.ndarray):
        self.distances = squareform(pdist(cluster[:, [KP_X, KP_Y]]))
        self.sigma = cluster[:, KP_SIGMA]

    def __call__(self, selected: np.ndarray) -> tuple[float, float]:
        idx = np.flatnonzero(selected)
        response = float(self.sigma[idx].sum())
        if len(idx) < 2:
            return 0.0, response
        block = self.distances[np.ix_(idx, idx)]
        return float(block[np.triu_indices(len(idx), 1)].min()), response


def farthest_point_subset(cluster: np.ndarray, size: int) -> np.ndarray:
    """greedy maximin selection seeded with the farthest pair, as a boolean mask"""
    m = len(cluster)
    selected = np.zeros(m, dtype=bool)
    sigma = cluster[:, KP_SIGMA]
    if size == 1:
        selected[int(np.argmax(sigma))] = True
        return selected
    distances = squareform(pdist(cluster[:, [KP_X, KP_Y]]))
    i, j = np.unravel_index(int(np.argmax(distances)), distances.shape)
    selected[[i, j]] = True
    nearest = np.minimum(distances[i], distances[j])
    while selected.sum() < size:
        candidates = np.flatnonzero(~selected)
        # farthest from the selection, then strongest, then lowest index
        order = np.lexsort((candidates, -sigma[candidates], -nearest[candidates]))
        pick = candidates[order[0]]
        selected[pick] = True
        nearest = np.minimum(nearest, distances[pick])
    return selected


def _random_individual(m: int, size: int, rng: np.random.Generator) -> np.ndarray:
    individual = np.zeros(m, dtype=bool)
    individual[rng.permutation(m)[:size]] = True
    return individual


def _crossover(a: np.ndarray, b: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """uniform crossover with cardinality repair: shared genes stay, the rest fill at random"""
    child = a & b
    pool = np.flatnonzero(a ^ b)
    missing = size - int(child.sum())
    child[pool[rng.permutation(len(pool))[:missing]]] = True
    return child


def _mutate(individual: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """swap one selected gene with one unselected gene with probability `rate`"""
    if rng.random() >= rate:
        return individual
    on, off = np.flatnonzero(individual), np.flatnonzero(~individual)
    if len(on) == 0 or len(off) == 0:
        return individual
    individual = individual.copy()
    individual[on[rng.integers(len(on))]] = False
    individual[off[rng.integers(len(off))]] = True
    return individual


def ga_select(cluster: np.ndarray, cfg: ResampleConfig, rng: np.random.Generator) -> np.ndarray:
    """indices (ascending) of the fixed-size subset the genetic search finds for one cluster"""
    m = len(cluster)
    size = subset_size(m, cfg.selection_ratio)
    if size >= m:
        return np.arange(m)
    fitness = SubsetFitness(cluster)

    population = [farthest_point_subset(cluster, size)]
    population += [_random_individual(m, size, rng) for _ in range(cfg.population - 1)]
    scores = [fitness(ind) for ind in population]

    def tournament() -> np.ndarray:
        entrants = rng.integers(len(population), size=cfg.tournament)
        return population[max(entrants, key=lambda k: (scores[k], -k))]

    for _ in range(cfg.generations):
        ranked = sorted(range(len(population)), key=lambda k: scores[k], reverse=True)
        offspring = [population[k] for k in ranked[:cfg.elitism]]
        while len(offspring) < cfg.population:
            child = _crossover(tournament(), tournament(), size, rng)
            offspring.append(_mutate(child, cfg.mutation_rate, rng))
        population = offspring
        scores = [fitness(ind) for ind in population]

    best = max(range(len(population)), key=lambda k: (scores[k], -k))
    return np.flatnonzero(population[best])


def ga_resample_cluster(cluster: np.ndarray, cfg: ResampleConfig, seed: int | None = None
                        ) -> np.ndarray:
    """surviving keypoints of one cluster"""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return cluster[ga_select(cluster, cfg, rng)]


@dataclass
class ResamplePlan:
    """what resampling decided for every input keypoint"""
    keep: np.ndarray
    labels: np.ndarray
    radius: float = 0.0
    latents: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    model: Autoencoder | None = None
    losses: list[float] = field(default_factory=list)

    @property
    def categories(self) -> np.ndarray:
        """UNIFORM for kept noise points, CLUSTERED for kept cluster members, REMOVED otherwise"""
        out = np.full(len(self.keep), REMOVED, dtype=np.intp)
        out[self.keep & (self.labels == NOISE)] = UNIFORM
        out[self.keep & (self.labels != NOISE)] = CLUSTERED
        return out

    @property
    def removed(self) -> int:
        return int(np.count_nonzero(~self.keep))


def plan_resampling(keypoints: np.ndarray, cfg: ResampleConfig,
                    warm_start: Autoencoder | None = None) -> ResamplePlan:
    """decide which keypoints survive; small or degenerate sets keep everything"""
    kps = np.asarray(keypoints, dtype=np.float64).reshape(-1, len(KEYPOINT_FIELDS))
    n = len(kps)
    identity = ResamplePlan(np.ones(n, dtype=bool), np.full(n, NOISE, dtype=np.intp))
    if n < N_MIN + 1:
        logger.debug("%d keypoints, resampling skipped", n)
        return identity

    model, latents, losses = train_autoencoder(kps, cfg, warm_start)
    identity.model, identity.latents, identity.losses = model, latents, losses
    radius = adaptive_radius(latents, cfg)
    if radius == 0:
        logger.debug("latent radius is 0, resampling skipped")
        return identity
    # radius is a squared distance; neighbours satisfy ||k'_i - k'_j||² <= radius
    labeling = dbscan(latents, math.sqrt(radius), N_MIN)
    if labeling.cluster_count == 0:
        logger.debug("no latent clusters at radius %.3g, resampling skipped", radius)
        return identity

    keep = labeling.noise.copy()
    for cluster in range(labeling.cluster_count):
        members = labeling.members(cluster)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, cluster]))
        keep[members[ga_select(kps[members], cfg, rng)]] = True
    plan = ResamplePlan(keep, labeling.labels, radius, latents, model, losses)
    logger.debug("resampling kept %d of %d keypoints in %d clusters (r=%.3g)",
                 int(keep.sum()), n, labeling.cluster_count, radius)
    return plan


def resample_keypoints(keypoints: np.ndarray, cfg: ResampleConfig,
                       warm_start: Autoencoder | None = None) -> np.ndarray:
    """K_r: the noise keypoints plus every cluster's genetic selection, in input order"""
    kps = np.asarray(keypoints, dtype=np.float64).reshape(-1, len(KEYPOINT_FIELDS))
    return kps[plan_resampling(kps, cfg, warm_start).keep]


def nn_distance_std(keypoints: np.ndarray) -> float:
    """standard deviation of nearest-neighbour image distances; 0 for fewer than 2 keypoints"""
    kps = np.asarray(keypoints, dtype=np.float64).reshape(-1, len(KEYPOINT_FIELDS))
    if len(kps) < 2:
        return 0.0
    xy = kps[:, [KP_X, KP_Y]]
    distances, _ = cKDTree(xy).query(xy, k=2)
    return float(np.std(distances[:, 1]))


def draw_overlay(rgb: np.ndarray, keypoints: np.ndarray, plan: ResamplePlan,
                 radius: int = 3) -> np.ndarray:
    """RGB image with every keypoint drawn in its category color"""
    canvas = np.ascontiguousarray(rgb.copy())
    for kp, category in zip(keypoints, plan.categories):
        center = (int(round(kp[KP_X])), int(round(kp[KP_Y])))
        cv2.circle(canvas, center, radius, CATEGORY_COLORS[int(category)], 1, cv2.LINE_AA)
    return canvas
