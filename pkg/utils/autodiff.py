"""
Différentiation automatique en mode inverse (minimale).

Fournit juste ce qu'il faut pour exprimer la passe avant du classifieur
et obtenir les gradients analytiques exacts d'une perte scalaire:

- primitives: matmul, addition (avec broadcast), tanh, relu,
  entropie croisée softmax fusionnée, moyenne sur le batch
- ParamSet / GradSet: dictionnaires immuables de tenseurs nommés
- grad(), sgd_step(), finite_diff() et la sérialisation texte des paramètres

Tout est en float64. Aucune opération ne modifie ses entrées.

Auteur: HateMAML-lab Team
Version: 1.0.0
"""

import hashlib
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from utils.errors import NumericError, StructuralError


logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, sparse.spmatrix, float, int, Sequence[float]]


# =============================================================================
# TENSEURS
# =============================================================================

class Tensor:
    """
    Nœud du graphe de calcul.

    `data` est un ndarray float64 (ou une matrice creuse CSR pour les
    constantes d'entrée du classifieur). `creator` référence la Function
    qui a produit ce tenseur, None pour une feuille.
    """

    __slots__ = ("data", "requires_grad", "creator", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional["Function"] = None,
        name: Optional[str] = None,
    ):
        if sparse.issparse(data):
            if requires_grad:
                raise StructuralError(f"sparse tensor '{name}' cannot require gradients")
            self.data = sparse.csr_matrix(data, dtype=np.float64)
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.creator = creator
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def label(self) -> str:
        return self.name or "<intermediate>"

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return MatMul.apply(self, as_tensor(other))

    def __add__(self, other: Any) -> "Tensor":
        return Add.apply(self, as_tensor(other))

    def __radd__(self, other: Any) -> "Tensor":
        return Add.apply(as_tensor(other), self)

    def tanh(self) -> "Tensor":
        return Tanh.apply(self)

    def relu(self) -> "Tensor":
        return Relu.apply(self)

    def mean(self) -> "Tensor":
        return Mean.apply(self)


def as_tensor(value: Any) -> Tensor:
    """Enveloppe une valeur en constante si ce n'est pas déjà un Tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


# =============================================================================
# PRIMITIVES
# =============================================================================

class Function:
    """
    Opération différentiable.

    Les sous-classes implémentent forward() sur les tableaux bruts et
    backward() qui reçoit dL/d(sortie) et renvoie dL/d(entrée) pour
    chaque entrée (None si l'entrée ne requiert pas de gradient).
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self, *arrays: Any, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("forward pass not implemented")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("backward pass not implemented")

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        func = cls(*inputs)
        out = func.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, creator=func if requires_grad else None)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Somme les dimensions ajoutées par le broadcast numpy."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class MatMul(Function):
    """Produit matriciel 2-D; l'opérande gauche peut être une constante creuse."""

    def forward(self, a: Any, b: np.ndarray) -> np.ndarray:
        left, right = self.inputs
        if len(a.shape) != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise StructuralError(
                f"matmul shape mismatch: {left.label} {tuple(a.shape)} @ {right.label} {tuple(b.shape)}"
            )
        if sparse.issparse(b):
            raise StructuralError(f"right operand {right.label} of matmul must be dense")
        return np.asarray(a @ b)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        left, right = self.inputs
        grad_left = grad @ right.data.T if left.requires_grad else None
        grad_right = np.asarray(left.data.T @ grad) if right.requires_grad else None
        return grad_left, grad_right


class Add(Function):
    """Addition élément par élément avec broadcast (biais)."""

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        left, right = self.inputs
        if sparse.issparse(a) or sparse.issparse(b):
            raise StructuralError("add does not accept sparse operands")
        try:
            return a + b
        except ValueError as exc:
            raise StructuralError(
                f"add shape mismatch: {left.label} {a.shape} + {right.label} {b.shape}"
            ) from exc

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        left, right = self.inputs
        return (
            _unbroadcast(grad, left.shape) if left.requires_grad else None,
            _unbroadcast(grad, right.shape) if right.requires_grad else None,
        )


class Tanh(Function):

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * (1.0 - self.out ** 2),)


class Relu(Function):
    """relu, de dérivée 0 exactement en 0."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.mask,)


class SoftmaxCrossEntropy(Function):
    """
    Entropie croisée softmax par ligne, sous forme log-sum-exp stable.

    Sortie: vecteur (B,) des pertes par exemple.
    """

    def forward(self, logits: np.ndarray, labels: Sequence[int] = ()) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        if logits.ndim != 2 or labels.shape != (logits.shape[0],):
            raise StructuralError(
                f"softmax cross-entropy expects logits (B, C) and B labels, "
                f"got {logits.shape} and {labels.shape}"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
            raise StructuralError(f"labels out of range for {logits.shape[1]} classes")
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        self.probs = np.exp(shifted - log_norm[:, None])
        self.labels = labels
        return log_norm - shifted[np.arange(labels.size), labels]

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        delta = self.probs.copy()
        delta[np.arange(self.labels.size), self.labels] -= 1.0
        return (grad[:, None] * delta,)


class Mean(Function):
    """Moyenne de toutes les entrées -> scalaire."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.size == 0:
            raise StructuralError("mean over an empty tensor")
        self.in_shape = x.shape
        return np.asarray(x.mean())

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        size = int(np.prod(self.in_shape))
        return (np.full(self.in_shape, float(grad) / size),)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    return SoftmaxCrossEntropy.apply(logits, labels=labels)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax numérique stable (hors graphe)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


# =============================================================================
# PARAMSET / GRADSET
# =============================================================================

class _TensorMap(Mapping[str, np.ndarray]):
    """Dictionnaire immuable nom -> ndarray float64, trié par nom."""

    def __init__(self, tensors: Mapping[str, ArrayLike]):
        items: Dict[str, np.ndarray] = {}
        for name in sorted(tensors):
            array = np.array(tensors[name], dtype=np.float64)
            if array.ndim == 0 or any(dim <= 0 for dim in array.shape):
                raise StructuralError(f"parameter '{name}' must have positive dimensions, got {array.shape}")
            array.setflags(write=False)
            items[name] = array
        self._tensors = items

    @classmethod
    def _from_owned(cls, tensors: Dict[str, np.ndarray]):
        """Construit sans copie à partir de tableaux fraîchement calculés."""
        obj = cls.__new__(cls)
        items = {}
        for name in sorted(tensors):
            array = tensors[name]
            array.setflags(write=False)
            items[name] = array
        obj._tensors = items
        return obj

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self) -> str:
        shapes = ", ".join(f"{n}{a.shape}" for n, a in self._tensors.items())
        return f"{type(self).__name__}({shapes})"

    @property
    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: array.shape for name, array in self._tensors.items()}

    def is_compatible(self, other: Mapping[str, np.ndarray]) -> bool:
        """Mêmes noms et mêmes formes."""
        return list(self) == sorted(other) and all(
            self[name].shape == np.shape(other[name]) for name in self
        )

    def check_compatible(self, other: Mapping[str, np.ndarray], context: str = "") -> None:
        prefix = f"{context}: " if context else ""
        missing = sorted(set(self) ^ set(other))
        if missing:
            raise StructuralError(f"{prefix}parameter '{missing[0]}' present in only one of the sets")
        for name in self:
            if self[name].shape != np.shape(other[name]):
                raise StructuralError(
                    f"{prefix}parameter '{name}' has shape {np.shape(other[name])}, expected {self[name].shape}"
                )

    def equals(self, other: Mapping[str, np.ndarray]) -> bool:
        """Égalité bit à bit des valeurs."""
        return self.is_compatible(other) and all(
            np.array_equal(self[name], other[name]) for name in self
        )

    def digest(self) -> str:
        sha = hashlib.sha256()
        for name, array in self._tensors.items():
            sha.update(name.encode("utf-8"))
            sha.update(repr(array.shape).encode("ascii"))
            sha.update(np.ascontiguousarray(array).tobytes())
        return sha.hexdigest()

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self._tensors.values())))


class ParamSet(_TensorMap):
    """Paramètres θ du modèle (immuables)."""


class GradSet(_TensorMap):
    """Gradients, structurellement compatibles avec un ParamSet."""

    def __add__(self, other: "GradSet") -> "GradSet":
        self.check_compatible(other, "gradient sum")
        return GradSet._from_owned({name: self[name] + other[name] for name in self})

    def scale(self, factor: float) -> "GradSet":
        return GradSet._from_owned({name: self[name] * factor for name in self})

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "GradSet":
        return cls._from_owned({name: np.zeros_like(params[name], dtype=np.float64) for name in params})


LossFn = Callable[[Dict[str, Tensor]], Any]


# =============================================================================
# OPÉRATIONS
# =============================================================================

def _leaves(params: Mapping[str, np.ndarray], requires_grad: bool) -> Dict[str, Tensor]:
    return {name: Tensor(params[name], requires_grad=requires_grad, name=name) for name in params}


def _scalar(out: Any) -> Tuple[Tensor, float]:
    out = as_tensor(out)
    if sparse.issparse(out.data) or out.data.size != 1:
        raise StructuralError(f"loss must be a scalar, got shape {out.shape}")
    value = float(np.asarray(out.data).reshape(-1)[0])
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss value {value}")
    return out, value


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for parent in node.creator.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def grad(loss_fn: LossFn, params: ParamSet) -> Tuple[float, GradSet]:
    """
    Évalue la perte et ses gradients analytiques par rapport à tous les paramètres.

    Args:
        loss_fn: fonction des feuilles {nom: Tensor} vers un scalaire
        params: point d'évaluation

    Returns:
        (valeur de la perte, GradSet)
    """
    leaves = _leaves(params, requires_grad=True)
    out, value = _scalar(loss_fn(leaves))

    grads: Dict[int, np.ndarray] = {}
    if out.requires_grad:
        grads[id(out)] = np.ones(out.shape, dtype=np.float64)
        for node in reversed(_topological_order(out)):
            upstream = grads.get(id(node))
            if upstream is None or node.creator is None:
                continue
            for parent, parent_grad in zip(node.creator.inputs, node.creator.backward(upstream)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    result: Dict[str, np.ndarray] = {}
    for name, leaf in leaves.items():
        g = grads.get(id(leaf))
        g = np.zeros(leaf.shape) if g is None else np.array(g, dtype=np.float64).reshape(leaf.shape)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")
        result[name] = g
    return value, GradSet._from_owned(result)


def evaluate(loss_fn: LossFn, params: Mapping[str, np.ndarray]) -> float:
    """Passe avant seule, sans construire de graphe."""
    _, value = _scalar(loss_fn(_leaves(params, requires_grad=False)))
    return value


def sgd_step(params: ParamSet, grads: GradSet, lr: float) -> ParamSet:
    """p' = p - lr * g pour chaque entrée; `params` n'est pas modifié."""
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    params.check_compatible(grads, "sgd_step")
    if lr == 0:
        return params
    return ParamSet._from_owned({name: params[name] - lr * grads[name] for name in params})


def finite_diff(loss_fn: LossFn, params: ParamSet, h: float = 1e-4) -> GradSet:
    """Estimation par différences centrées (f(p+h) - f(p-h)) / 2h, entrée par entrée."""
    if not 0 < h <= 1e-2:
        raise ValueError(f"h must lie in (0, 1e-2], got {h}")
    working = {name: np.array(params[name]) for name in params}
    estimates: Dict[str, np.ndarray] = {}
    for name, array in working.items():
        estimate = np.zeros_like(array)
        flat, flat_estimate = array.reshape(-1), estimate.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + h
            upper = evaluate(loss_fn, working)
            flat[index] = original - h
            lower = evaluate(loss_fn, working)
            flat[index] = original
            flat_estimate[index] = (upper - lower) / (2.0 * h)
        estimates[name] = estimate
    return GradSet._from_owned(estimates)


# =============================================================================
# SÉRIALISATION
# =============================================================================

def save_params(params: ParamSet, path: Union[str, Path]) -> Path:
    """
    Écrit un ParamSet au format texte: une ligne d'en-tête `nom dim...`,
    puis les valeurs ligne par ligne (ordre row-major, 17 chiffres
    significatifs), un bloc par paramètre séparé par une ligne vide.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for position, (name, array) in enumerate(params.items()):
            if position:
                fh.write("\n")
            fh.write(" ".join([name, *map(str, array.shape)]) + "\n")
            rows = array.reshape(-1, array.shape[-1])
            np.savetxt(fh, rows, fmt="%.17g")
    return path


def load_params(path: Union[str, Path]) -> ParamSet:
    """Relit un fichier écrit par save_params (valeurs exactes)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    tensors: Dict[str, np.ndarray] = {}
    cursor = 0
    while cursor < len(lines):
        if not lines[cursor].strip():
            cursor += 1
            continue
        header = lines[cursor].split()
        try:
            name, shape = header[0], tuple(int(dim) for dim in header[1:])
        except (IndexError, ValueError) as exc:
            raise StructuralError(f"{path}: malformed header at line {cursor + 1}: {lines[cursor]!r}") from exc
        if not shape:
            raise StructuralError(f"{path}: parameter '{name}' has no shape (line {cursor + 1})")
        n_rows = int(np.prod(shape[:-1])) if len(shape) > 1 else 1
        block = lines[cursor + 1: cursor + 1 + n_rows]
        if len(block) != n_rows:
            raise StructuralError(f"{path}: parameter '{name}' is truncated")
        values = np.array([float(v) for row in block for v in row.split()], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise StructuralError(
                f"{path}: parameter '{name}' holds {values.size} values, shape {shape} needs {int(np.prod(shape))}"
            )
        if name in tensors:
            raise StructuralError(f"{path}: duplicate parameter '{name}'")
        tensors[name] = values.reshape(shape)
        cursor += 1 + n_rows
    return ParamSet._from_owned(tensors)
