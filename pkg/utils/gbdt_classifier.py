"""
Gradient-boosted decision trees for the at-risk / not-at-risk decision.

Binary logistic loss, second-order (Newton) leaf values, leaf-wise growth
with exact greedy split search:

    g_i = p_i - y_i,  h_i = p_i (1 - p_i)
    gain = 1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)]
    leaf = -G/(H+l), shrunk by the learning rate

Split candidates are midpoints between consecutive distinct values; ties go
to the lowest feature index, then the lowest threshold. A sample goes left
when feature <= threshold.

The per-leaf scan and the row partition are compiled with numba.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logit
from numba import njit

from .errors import CorruptModel, InvalidParams, InvariantViolation, SchemaMismatch, SingleClass, VersionMismatch
from .feature_engineering import FeatureSet, FeatureVector, LabeledSample, Label, stack_features

logger = logging.getLogger(__name__)

FORMAT_NAME = 'fallrisk-forest'
FORMAT_VERSION = 1

# keeps G/(H+l) finite when every hessian underflows to zero
_HESSIAN_FLOOR = 1e-16
# gains within rounding noise of the score terms are not splits
_GAIN_RELATIVE_TOLERANCE = 1e-12
_TIE_RELATIVE_TOLERANCE = 1e-12
_PROBA_EPS = 1e-15


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.1
    n_trees: int = 100
    max_leaves: int = 31
    max_depth: Optional[int] = None
    min_samples_leaf: int = 20
    lambda_l2: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParams(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.n_trees < 1:
            raise InvalidParams(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_leaves < 2:
            raise InvalidParams(f"max_leaves must be >= 2, got {self.max_leaves}")
        if self.max_depth is not None and self.max_depth < 1:
            raise InvalidParams(f"max_depth must be >= 1 or unlimited, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise InvalidParams(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.lambda_l2 < 0:
            raise InvalidParams(f"lambda_l2 must be >= 0, got {self.lambda_l2}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'learning_rate': self.learning_rate,
            'n_trees': self.n_trees,
            'max_leaves': self.max_leaves,
            'max_depth': self.max_depth,
            'min_samples_leaf': self.min_samples_leaf,
            'lambda_l2': self.lambda_l2,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'Hyperparams':
        return cls(
            learning_rate=float(d['learning_rate']),
            n_trees=int(d['n_trees']),
            max_leaves=int(d['max_leaves']),
            max_depth=None if d['max_depth'] is None else int(d['max_depth']),
            min_samples_leaf=int(d['min_samples_leaf']),
            lambda_l2=float(d['lambda_l2']),
        )


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    gain: float
    left: 'TreeNode'
    right: 'TreeNode'


TreeNode = Union[Split, Leaf]


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension min-max scaling fitted on training data."""

    minimums: Tuple[float, ...]
    maximums: Tuple[float, ...]

    @classmethod
    def fit(cls, X: np.ndarray) -> 'FeatureScaler':
        return cls(tuple(float(v) for v in X.min(axis=0)), tuple(float(v) for v in X.max(axis=0)))

    def transform(self, X: np.ndarray) -> np.ndarray:
        lo = np.array(self.minimums)
        span = np.array(self.maximums) - lo
        span[span <= 0] = 1.0
        return (X - lo) / span


@dataclass(frozen=True)
class Forest:
    base_score: float
    trees: Tuple[TreeNode, ...]
    hyperparams: Hyperparams
    feature_set: Optional[FeatureSet]
    scaling: FeatureScaler
    n_features: int
    seed: int = 0

    @property
    def learning_rate(self) -> float:
        return self.hyperparams.learning_rate


@dataclass
class _Candidate:
    feature: int
    threshold: float
    gain: float
    n_left: int


@dataclass
class _GrowingLeaf:
    node_id: int
    order: np.ndarray  # (n_features, n_rows) row ids, each row sorted by its feature
    depth: int
    best: Optional[_Candidate] = None


@dataclass
class _Builder:
    nodes: Dict[int, Any] = field(default_factory=dict)
    next_id: int = 0

    def new_id(self) -> int:
        self.next_id += 1
        return self.next_id - 1


@njit(cache=True)
def _scan_splits(order, X_t, g, h, lambda_l2, min_samples_leaf):
    """
    Exact greedy scan over every feature of one leaf.

    Each row of order lists the leaf's row ids sorted by that feature. A
    position i splits the sorted rows into [0, i] and (i, k).

    Returns:
        (feature, position, gain, noise) of the best split; feature is -1
        when no position is valid
    """
    n_features, k = order.shape
    G = 0.0
    H = 0.0
    for j in range(k):
        G += g[order[0, j]]
        H += h[order[0, j]]
    parent = G * G / max(H + lambda_l2, _HESSIAN_FLOOR)

    scores = np.empty((n_features, k - 1))
    top = -np.inf
    for f in range(n_features):
        g_left = 0.0
        h_left = 0.0
        upper = X_t[f, order[f, 0]]
        for i in range(k - 1):
            r = order[f, i]
            g_left += g[r]
            h_left += h[r]
            lower = upper
            upper = X_t[f, order[f, i + 1]]
            n_left = i + 1
            if n_left < min_samples_leaf or k - n_left < min_samples_leaf or not lower < upper:
                scores[f, i] = -np.inf
                continue
            g_right = G - g_left
            h_right = H - h_left
            s = (g_left * g_left / max(h_left + lambda_l2, _HESSIAN_FLOOR)
                 + g_right * g_right / max(h_right + lambda_l2, _HESSIAN_FLOOR))
            scores[f, i] = s
            if s > top:
                top = s

    if top == -np.inf:
        return -1, -1, 0.0, 0.0
    # gains equal up to rounding are ties: lowest feature, then lowest threshold
    cutoff = top - _TIE_RELATIVE_TOLERANCE * abs(top - parent)
    for f in range(n_features):
        for i in range(k - 1):
            if scores[f, i] >= cutoff:
                return f, i, 0.5 * (scores[f, i] - parent), _GAIN_RELATIVE_TOLERANCE * (scores[f, i] + parent)
    return -1, -1, 0.0, 0.0


@njit(cache=True)
def _partition(order, goes_left, n_left):
    """Stable split of every sorted row of order into left and right children."""
    n_features, k = order.shape
    left = np.empty((n_features, n_left), np.int64)
    right = np.empty((n_features, k - n_left), np.int64)
    for f in range(n_features):
        a = 0
        b = 0
        for j in range(k):
            r = order[f, j]
            if goes_left[r]:
                left[f, a] = r
                a += 1
            else:
                right[f, b] = r
                b += 1
    return left, right


def _find_best_split(
    order: np.ndarray,
    X_t: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    hp: Hyperparams
) -> Optional[_Candidate]:
    """
    Best split of one leaf.

    Args:
        order: (n_features, k) row ids of the leaf, sorted per feature
        X_t: Transposed design matrix (n_features, n_samples)
        g, h: Gradients and hessians of all samples
        hp: Hyperparameters

    Returns:
        Best candidate, or None when no split has positive gain
    """
    k = order.shape[1]
    if k < 2 * hp.min_samples_leaf or k < 2:
        return None

    f, i, gain, noise = _scan_splits(order, X_t, g, h, float(hp.lambda_l2), int(hp.min_samples_leaf))
    if f < 0 or gain <= noise:
        return None

    lo, hi = X_t[f, order[f, i]], X_t[f, order[f, i + 1]]
    threshold = 0.5 * (lo + hi)
    if not lo <= threshold < hi:
        threshold = lo
    return _Candidate(int(f), float(threshold), float(gain), int(i) + 1)


def _grow_tree(
    X: np.ndarray,
    X_t: np.ndarray,
    root_order: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    hp: Hyperparams
) -> Tuple[TreeNode, np.ndarray]:
    """
    Grow one tree leaf-wise: always split the open leaf with the highest gain.

    Returns:
        (tree, per-sample output of the tree on the training rows)
    """
    builder = _Builder()
    root = _GrowingLeaf(builder.new_id(), root_order, depth=0)
    root.best = _find_best_split(root.order, X_t, g, h, hp)
    leaves = [root]

    while len(leaves) < hp.max_leaves:
        open_leaves = [leaf for leaf in leaves if leaf.best is not None]
        if not open_leaves:
            break
        target = max(open_leaves, key=lambda leaf: (leaf.best.gain, -leaf.node_id))
        cand = target.best
        if not cand.gain > 0:
            raise InvariantViolation(f"Accepted split with non-positive gain {cand.gain}")

        goes_left = X[:, cand.feature] <= cand.threshold
        n_left = int(goes_left[target.order[0]].sum())
        if n_left != cand.n_left:
            raise InvariantViolation(f"Split routed {n_left} rows left, expected {cand.n_left}")

        left_order, right_order = _partition(target.order, goes_left, n_left)
        left = _GrowingLeaf(builder.new_id(), left_order, target.depth + 1)
        right = _GrowingLeaf(builder.new_id(), right_order, target.depth + 1)
        # the last split fills the leaf budget; its children stay leaves
        if len(leaves) + 1 < hp.max_leaves:
            for child in (left, right):
                if hp.max_depth is None or child.depth < hp.max_depth:
                    child.best = _find_best_split(child.order, X_t, g, h, hp)

        builder.nodes[target.node_id] = ('split', cand, left.node_id, right.node_id)
        leaves.remove(target)
        leaves.extend([left, right])

    outputs = np.zeros(X.shape[0])
    for leaf in leaves:
        rows = leaf.order[0]
        G, H = float(np.sum(g[rows])), float(np.sum(h[rows]))
        value = -G / max(H + hp.lambda_l2, _HESSIAN_FLOOR) * hp.learning_rate
        builder.nodes[leaf.node_id] = ('leaf', value)
        outputs[rows] = value

    def _freeze(node_id: int) -> TreeNode:
        node = builder.nodes[node_id]
        if node[0] == 'leaf':
            return Leaf(node[1])
        _, cand, left_id, right_id = node
        return Split(cand.feature, cand.threshold, cand.gain, _freeze(left_id), _freeze(right_id))

    return _freeze(root.node_id), outputs


def fit_arrays(
    X: np.ndarray,
    y: np.ndarray,
    hp: Hyperparams,
    feature_set: Optional[FeatureSet] = None,
    seed: int = 0
) -> Forest:
    """
    Train on a design matrix with 0/1 targets (1 = at risk).

    Training uses no randomness (no row or feature subsampling); the seed is
    recorded in the model for provenance.

    Raises:
        SchemaMismatch: If X and y disagree in length or X is not 2-D
        SingleClass: If all targets are identical
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise SchemaMismatch(f"Design matrix {X.shape} does not match {len(y)} labels")
    if len(y) < 2:
        raise SingleClass(f"Need at least 2 samples, got {len(y)}")
    positive_rate = float(np.mean(y))
    if positive_rate in (0.0, 1.0):
        raise SingleClass("All training labels are identical")

    scaler = FeatureScaler.fit(X)
    X_scaled = scaler.transform(X)
    X_t = np.ascontiguousarray(X_scaled.T)
    root_order = np.argsort(X_t, axis=1, kind='stable').astype(np.int64)

    base_score = float(logit(positive_rate))
    raw = np.full(len(y), base_score)
    trees: List[TreeNode] = []
    for round_index in range(hp.n_trees):
        p = expit(raw)
        g = p - y
        h = p * (1.0 - p)
        tree, outputs = _grow_tree(X_scaled, X_t, root_order, g, h, hp)
        trees.append(tree)
        raw = raw + outputs
        logger.debug(f"Round {round_index + 1}/{hp.n_trees}: leaves={count_leaves(tree)}")

    return Forest(base_score, tuple(trees), hp, feature_set, scaler, X.shape[1], seed)


def fit(samples: Sequence[LabeledSample], hp: Hyperparams, seed: int = 0) -> Forest:
    """
    Train a forest on labeled feature vectors.

    Args:
        samples: Training samples sharing one feature set
        hp: Hyperparameters
        seed: Recorded in the model; training itself is deterministic

    Returns:
        Trained Forest

    Raises:
        SchemaMismatch: On inconsistent feature schemas
        SingleClass: If only one label is present
    """
    X, y = stack_features(samples)
    return fit_arrays(X, y, hp, samples[0].features.feature_set, seed)


def count_leaves(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 1
    return count_leaves(node.left) + count_leaves(node.right)


def _route(node: TreeNode, x: np.ndarray) -> float:
    while isinstance(node, Split):
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    return node.value


def _tree_outputs(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))

    def _fill(n: TreeNode, rows: np.ndarray):
        if isinstance(n, Leaf):
            out[rows] = n.value
            return
        left = X[rows, n.feature_index] <= n.threshold
        _fill(n.left, rows[left])
        _fill(n.right, rows[~left])

    _fill(node, np.arange(len(X)))
    return out


def _check_matrix(forest: Forest, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != forest.n_features:
        raise SchemaMismatch(f"Model expects {forest.n_features} features, got {X.shape[1]}")
    return X


def raw_scores(forest: Forest, X: np.ndarray) -> np.ndarray:
    X_scaled = forest.scaling.transform(_check_matrix(forest, X))
    raw = np.full(len(X_scaled), forest.base_score)
    for tree in forest.trees:
        raw = raw + _tree_outputs(tree, X_scaled)
    return raw


def predict_proba_batch(forest: Forest, X: np.ndarray) -> np.ndarray:
    """At-risk probabilities for every row of a raw (unscaled) feature matrix."""
    return np.clip(expit(raw_scores(forest, X)), _PROBA_EPS, 1.0 - _PROBA_EPS)


def predict_proba(forest: Forest, features: FeatureVector) -> float:
    """
    Probability that a frame is at risk, strictly inside (0, 1).

    Raises:
        SchemaMismatch: If the vector's feature set differs from the model's
    """
    if forest.feature_set is not None and features.feature_set is not forest.feature_set:
        raise SchemaMismatch(
            f"Model trained on '{forest.feature_set.value}', got '{features.feature_set.value}' features"
        )
    x = forest.scaling.transform(_check_matrix(forest, features.values))[0]
    raw = forest.base_score
    for tree in forest.trees:
        raw = raw + _route(tree, x)
    return float(np.clip(expit(raw), _PROBA_EPS, 1.0 - _PROBA_EPS))


def predict(forest: Forest, features: FeatureVector, threshold: float = 0.5) -> Label:
    """AtRisk iff predict_proba >= threshold."""
    return Label.AT_RISK if predict_proba(forest, features) >= threshold else Label.NOT_AT_RISK


def staged_log_loss(forest: Forest, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Mean logistic loss after 0, 1, ..., n_trees boosting rounds.

    Returns:
        Array of length len(forest.trees) + 1
    """
    X_scaled = forest.scaling.transform(_check_matrix(forest, X))
    y = np.asarray(y, dtype=float)
    raw = np.full(len(X_scaled), forest.base_score)

    def _loss(r: np.ndarray) -> float:
        # log(1 + exp(r)) - y r, written stably
        return float(np.mean(np.logaddexp(0.0, r) - y * r))

    losses = [_loss(raw)]
    for tree in forest.trees:
        raw = raw + _tree_outputs(tree, X_scaled)
        losses.append(_loss(raw))
    return np.array(losses)


def feature_importance(forest: Forest) -> np.ndarray:
    """Total split gain per feature over the whole forest."""
    totals = np.zeros(forest.n_features)

    def _walk(node: TreeNode):
        if isinstance(node, Split):
            totals[node.feature_index] += node.gain
            _walk(node.left)
            _walk(node.right)

    for tree in forest.trees:
        _walk(tree)
    return totals


def _node_to_dict(node: TreeNode) -> Dict[str, Any]:
    if isinstance(node, Leaf):
        return {'leaf': float(node.value)}
    return {
        'feature': int(node.feature_index),
        'threshold': float(node.threshold),
        'gain': float(node.gain),
        'left': _node_to_dict(node.left),
        'right': _node_to_dict(node.right),
    }


def _node_from_dict(d: Dict[str, Any], n_features: int) -> TreeNode:
    if 'leaf' in d:
        return Leaf(float(d['leaf']))
    feature = int(d['feature'])
    if not 0 <= feature < n_features:
        raise CorruptModel(f"Split feature {feature} outside schema of {n_features}")
    return Split(
        feature,
        float(d['threshold']),
        float(d['gain']),
        _node_from_dict(d['left'], n_features),
        _node_from_dict(d['right'], n_features),
    )


def save_model(forest: Forest) -> bytes:
    """
    Serialise a forest as versioned JSON text.

    Floats are written with repr precision, so loading reproduces
    predictions bit-exactly.
    """
    document = {
        'format': FORMAT_NAME,
        'format_version': FORMAT_VERSION,
        'hyperparams': forest.hyperparams.to_dict(),
        'feature_set': forest.feature_set.value if forest.feature_set is not None else None,
        'feature_names': forest.feature_set.feature_names() if forest.feature_set is not None else None,
        'n_features': forest.n_features,
        'seed': forest.seed,
        'base_score': float(forest.base_score),
        'scaling': {'min': list(forest.scaling.minimums), 'max': list(forest.scaling.maximums)},
        'trees': [_node_to_dict(tree) for tree in forest.trees],
    }
    return (json.dumps(document, indent=1, allow_nan=False) + '\n').encode('utf-8')


def load_model(data: bytes) -> Forest:
    """
    Parse a serialised forest.

    Raises:
        CorruptModel: Truncated, malformed or inconsistent content
        VersionMismatch: Unknown format version
    """
    try:
        document = json.loads(data.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptModel(f"Model is not valid JSON: {e}") from e
    if not isinstance(document, dict) or document.get('format') != FORMAT_NAME:
        raise CorruptModel("Not a fall-risk forest model")
    if document.get('format_version') != FORMAT_VERSION:
        raise VersionMismatch(
            f"Model format version {document.get('format_version')!r}, expected {FORMAT_VERSION}"
        )

    try:
        n_features = int(document['n_features'])
        tag = document['feature_set']
        feature_set = FeatureSet(tag) if tag is not None else None
        if feature_set is not None and feature_set.dimension != n_features:
            raise CorruptModel(f"Feature set '{tag}' does not have {n_features} features")
        scaling = FeatureScaler(
            tuple(float(v) for v in document['scaling']['min']),
            tuple(float(v) for v in document['scaling']['max']),
        )
        if len(scaling.minimums) != n_features or len(scaling.maximums) != n_features:
            raise CorruptModel("Scaling metadata does not match the feature count")
        return Forest(
            base_score=float(document['base_score']),
            trees=tuple(_node_from_dict(t, n_features) for t in document['trees']),
            hyperparams=Hyperparams.from_dict(document['hyperparams']),
            feature_set=feature_set,
            scaling=scaling,
            n_features=n_features,
            seed=int(document.get('seed', 0)),
        )
    except (KeyError, TypeError, ValueError, InvalidParams) as e:
        raise CorruptModel(f"Malformed model content: {e}") from e
