"""Core model types for multilevel latent-class IRT.

The measurement model covers binary items grouped into disjoint dimensions.
A student belongs to one of ``n_classes`` latent classes, each carrying an
ability support point per dimension; a school belongs to one of ``n_types``
latent school types.  Item response probabilities follow a two-parameter
logistic curve,

    P(correct | class v, item j) = sigmoid(disc_j * (ability[v, d(j)] - diff_j)),

with a reference item per dimension pinned to difficulty 0 and
discrimination 1 so the latent scale is identified.  The Rasch variant
("1pl") fixes all discriminations to 1; the plain latent-class variant
("lc") replaces the curve by a free success probability per (class, item)
cell and ignores the dimension structure.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np


class Parameterization(enum.Enum):
    """Item response parameterization."""

    LC = "lc"
    ONE_PL = "1pl"
    TWO_PL = "2pl"


@dataclass(frozen=True)
class ItemBank:
    """Item-to-dimension layout of a test.

    Parameters
    ----------
    n_items : int
        Number of binary items.
    n_dims : int
        Number of latent dimensions.
    dim_of : tuple of int
        For each item, the 0-based dimension it measures.
    reference_items : tuple of int
        For each dimension, the 0-based index of the item whose difficulty
        and discrimination are pinned to (0, 1).
    """

    n_items: int
    n_dims: int
    dim_of: tuple[int, ...]
    reference_items: tuple[int, ...]

    @classmethod
    def from_dim_of(cls, dim_of, reference_items=None) -> "ItemBank":
        """Build a bank from a dimension map; reference defaults to the
        first item of each dimension."""
        dim_of = tuple(int(d) for d in dim_of)
        n_items = len(dim_of)
        n_dims = max(dim_of) + 1 if dim_of else 0
        if reference_items is None:
            reference_items = []
            for d in range(n_dims):
                members = [j for j, dj in enumerate(dim_of) if dj == d]
                if not members:
                    raise ValueError(f"dimension {d} has no items")
                reference_items.append(members[0])
        return cls(n_items, n_dims, dim_of, tuple(int(j) for j in reference_items))

    @classmethod
    def single_dimension(cls, n_items: int) -> "ItemBank":
        return cls.from_dim_of([0] * n_items)

    def items_in_dim(self, d: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.dim_of) == d)

    @property
    def dim_index(self) -> np.ndarray:
        return np.asarray(self.dim_of, dtype=int)

    @property
    def is_reference(self) -> np.ndarray:
        mask = np.zeros(self.n_items, dtype=bool)
        mask[list(self.reference_items)] = True
        return mask


@dataclass(frozen=True)
class ModelSpec:
    """Model shape: item bank, class/type counts, covariate arities."""

    item_bank: ItemBank
    n_classes: int
    n_types: int
    parameterization: Parameterization = Parameterization.TWO_PL
    n_student_covariates: int = 0
    n_school_covariates: int = 0

    def replace(self, **changes) -> "ModelSpec":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """All free parameters of a fitted or hypothesised model.

    Arrays are copied on construction and frozen (non-writeable).  Shapes,
    with k_V classes, k_U types, r items, s dimensions:

    - ``difficulty``: (r,)
    - ``discrimination``: (r,)
    - ``abilities``: (k_V, s) class ability support points
    - ``class_intercepts``: (k_U, k_V - 1) membership logit intercepts,
      one row per school type; class 0 is the reference
    - ``class_slopes``: (k_V - 1, m_V) student covariate effects, shared
      across school types
    - ``type_intercepts``: (k_U - 1,) school-type logit intercepts;
      type 0 is the reference
    - ``type_slopes``: (k_U - 1, m_U) school covariate effects
    - ``lc_success``: (k_V, r) success probabilities, only under the "lc"
      parameterization (otherwise None)
    """

    difficulty: np.ndarray
    discrimination: np.ndarray
    abilities: np.ndarray
    class_intercepts: np.ndarray
    class_slopes: np.ndarray
    type_intercepts: np.ndarray
    type_slopes: np.ndarray
    lc_success: np.ndarray | None = None

    def __post_init__(self):
        for name in ("difficulty", "discrimination", "abilities",
                     "class_intercepts", "class_slopes",
                     "type_intercepts", "type_slopes", "lc_success"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.array(value, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # Shape accessors used throughout the package.
    @property
    def n_items(self) -> int:
        return self.difficulty.shape[0]

    @property
    def n_classes(self) -> int:
        return self.abilities.shape[0]

    @property
    def n_dims(self) -> int:
        return self.abilities.shape[1]

    @property
    def n_types(self) -> int:
        return self.class_intercepts.shape[0]

    @property
    def n_student_covariates(self) -> int:
        return self.class_slopes.shape[1]

    @property
    def n_school_covariates(self) -> int:
        return self.type_slopes.shape[1]

    def replace(self, **changes) -> "ParameterSet":
        return dataclasses.replace(self, **changes)


def item_success_prob(item, class_ability, params: ParameterSet,
                      spec: ModelSpec) -> float:
    """Success probability of one item for one latent class.

    ``class_ability`` is either an ability vector of length ``n_dims``
    (2PL/1PL) or a class index (required for the "lc" parameterization,
    allowed otherwise as shorthand for ``params.abilities[v]``).
    """
    bank = spec.item_bank
    if not 0 <= item < bank.n_items:
        raise IndexError(f"item index {item} out of range 0..{bank.n_items - 1}")
    if spec.parameterization is Parameterization.LC:
        if not isinstance(class_ability, (int, np.integer)):
            raise TypeError("lc parameterization requires a class index")
        p = float(params.lc_success[int(class_ability), item])
        if not np.isfinite(p):
            raise ValueError("non-finite success probability")
        return p
    if isinstance(class_ability, (int, np.integer)):
        ability = params.abilities[int(class_ability)]
    else:
        ability = np.asarray(class_ability, dtype=float)
        if ability.shape != (bank.n_dims,):
            raise ValueError(f"ability vector must have length {bank.n_dims}")
    gam = float(params.discrimination[item])
    beta = float(params.difficulty[item])
    xi = float(ability[bank.dim_of[item]])
    z = gam * (xi - beta)
    if not np.isfinite(z):
        raise ValueError("non-finite parameter values in success logit")
    # exp(-|z|) never overflows; the two branches keep full precision.
    if z >= 0:
        return float(1.0 / (1.0 + np.exp(-z)))
    e = float(np.exp(z))
    return e / (1.0 + e)


def apply_identifiability(params: ParameterSet, bank: ItemBank) -> ParameterSet:
    """Re-express item and ability parameters on the constrained scale.

    For every dimension the reference item ends with difficulty 0 and
    discrimination 1; remaining items and the class abilities are shifted
    and rescaled so that all implied response probabilities are unchanged.
    The map is the identity on already-constrained parameters, and on the
    "lc" success table.
    """
    diff = np.array(params.difficulty)
    disc = np.array(params.discrimination)
    abil = np.array(params.abilities)
    for d in range(bank.n_dims):
        ref = bank.reference_items[d]
        scale = disc[ref]
        if scale == 0:
            raise ValueError(f"reference item {ref} has zero discrimination; "
                             "scale of dimension {d} undefined")
        loc = diff[ref]
        members = bank.items_in_dim(d)
        abil[:, d] = scale * (abil[:, d] - loc)
        diff[members] = scale * (diff[members] - loc)
        disc[members] = disc[members] / scale
    return params.replace(difficulty=diff, discrimination=disc, abilities=abil)


def count_free_parameters(spec: ModelSpec) -> int:
    """Number of free parameters under the identifiability constraints."""
    kv, ku = spec.n_classes, spec.n_types
    mv, mu = spec.n_student_covariates, spec.n_school_covariates
    r, s = spec.item_bank.n_items, spec.item_bank.n_dims
    mixing = (kv - 1) * (mv + ku) + (ku - 1) * (mu + 1)
    if spec.parameterization is Parameterization.LC:
        return mixing + kv * r
    n = mixing + kv * s + 2 * (r - s)
    if spec.parameterization is Parameterization.ONE_PL:
        n -= r - s
    return n


def validate_spec(spec: ModelSpec) -> list[str]:
    """Check structural invariants; returns a list of violations (empty if ok)."""
    problems: list[str] = []
    bank = spec.item_bank
    if spec.n_classes < 1:
        problems.append(f"n_classes must be >= 1, got {spec.n_classes}")
    if spec.n_types < 1:
        problems.append(f"n_types must be >= 1, got {spec.n_types}")
    if spec.n_student_covariates < 0:
        problems.append("n_student_covariates must be >= 0")
    if spec.n_school_covariates < 0:
        problems.append("n_school_covariates must be >= 0")
    if len(bank.dim_of) != bank.n_items:
        problems.append(f"dim_of has length {len(bank.dim_of)}, expected {bank.n_items}")
    if bank.n_items < 1:
        problems.append("item bank is empty")
    for j, d in enumerate(bank.dim_of):
        if not 0 <= d < bank.n_dims:
            problems.append(f"item {j} assigned to dimension {d}, "
                            f"outside 0..{bank.n_dims - 1}")
    if len(bank.reference_items) != bank.n_dims:
        problems.append(f"expected {bank.n_dims} reference items, "
                        f"got {len(bank.reference_items)}")
    for d in range(bank.n_dims):
        members = [j for j, dj in enumerate(bank.dim_of) if dj == d]
        if not members:
            problems.append(f"empty dimension {d}")
            continue
        if d < len(bank.reference_items):
            ref = bank.reference_items[d]
            if not 0 <= ref < bank.n_items:
                problems.append(f"reference item {ref} of dimension {d} out of range")
            elif bank.dim_of[ref] != d:
                problems.append(f"reference item {ref} does not belong to dimension {d}")
    return problems


def validate_params(params: ParameterSet, spec: ModelSpec) -> list[str]:
    """Check parameter shapes and constraints against a spec."""
    problems: list[str] = []
    bank = spec.item_bank
    expected = {
        "difficulty": (bank.n_items,),
        "discrimination": (bank.n_items,),
        "abilities": (spec.n_classes, bank.n_dims),
        "class_intercepts": (spec.n_types, spec.n_classes - 1),
        "class_slopes": (spec.n_classes - 1, spec.n_student_covariates),
        "type_intercepts": (spec.n_types - 1,),
        "type_slopes": (spec.n_types - 1, spec.n_school_covariates),
    }
    for name, shape in expected.items():
        arr = getattr(params, name)
        if arr.shape != shape:
            problems.append(f"{name} has shape {arr.shape}, expected {shape}")
    if spec.parameterization is Parameterization.LC:
        if params.lc_success is None:
            problems.append("lc parameterization requires an lc_success table")
        elif params.lc_success.shape != (spec.n_classes, bank.n_items):
            problems.append(f"lc_success has shape {params.lc_success.shape}, "
                            f"expected {(spec.n_classes, bank.n_items)}")
        elif not (np.all(params.lc_success > 0) and np.all(params.lc_success < 1)):
            problems.append("lc_success entries must lie strictly inside (0, 1)")
    else:
        if not problems:
            for d in range(bank.n_dims):
                ref = bank.reference_items[d]
                if params.difficulty[ref] != 0.0 or params.discrimination[ref] != 1.0:
                    problems.append(f"reference item {ref} not constrained to "
                                    "difficulty 0, discrimination 1")
        if spec.parameterization is Parameterization.ONE_PL:
            if params.discrimination.shape == (bank.n_items,) and \
                    not np.all(params.discrimination == 1.0):
                problems.append("1pl parameterization requires all discriminations = 1")
    all_arrays = [params.difficulty, params.discrimination, params.abilities,
                  params.class_intercepts, params.class_slopes,
                  params.type_intercepts, params.type_slopes]
    if params.lc_success is not None:
        all_arrays.append(params.lc_success)
    if any(not np.all(np.isfinite(a)) for a in all_arrays if a.size):
        problems.append("non-finite parameter values")
    return problems


def max_abs_change(old: ParameterSet, new: ParameterSet) -> float:
    """Largest absolute entry-wise change between two parameter sets."""
    delta = 0.0
    for name in ("difficulty", "discrimination", "abilities",
                 "class_intercepts", "class_slopes",
                 "type_intercepts", "type_slopes", "lc_success"):
        a, b = getattr(old, name), getattr(new, name)
        if a is None or b is None:
            continue
        if a.size:
            delta = max(delta, float(np.max(np.abs(a - b))))
    return delta
