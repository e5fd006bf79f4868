"""Exact binding and unbinding of symbol structures.

A structure is a set of filler/role bindings. Binding is the outer
product of a filler vector with a role vector; a superposed structure is
the sum of its bindings, stored as a filler-dim x role-dim matrix.
Unbinding multiplies that matrix by the role's dual vector, which
recovers the filler exactly when the roles are linearly independent and
approximately (via the pseudo-inverse) otherwise.

This module is the reference semantics the learned network is later
interpreted against, so it favors clarity over speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import as_vec, invert_or_pinv, outer_product

# Duals recovered to this tolerance count as exact unbinding.
EXACT_DUAL_TOL = 1e-8


@dataclass(frozen=True)
class RoleBasis:
    """Role vectors, their dual (unbinding) vectors, and quality metadata.

    ``exact`` is True when every dual satisfies r_i . u_j = delta_ij to
    EXACT_DUAL_TOL; ``max_dual_error`` is the worst deviation, which
    quantifies how approximate unbinding will be for a degenerate basis.
    """

    roles: np.ndarray        # (role_dim, n_roles), columns are role vectors
    duals: np.ndarray        # (n_roles, role_dim), rows are unbinding vectors
    exact: bool
    max_dual_error: float
    cond: float

    @property
    def n_roles(self) -> int:
        return self.roles.shape[1]

    @property
    def role_dim(self) -> int:
        return self.roles.shape[0]

    def role(self, j: int) -> np.ndarray:
        return self.roles[:, j].copy()

    def dual(self, j: int) -> np.ndarray:
        return self.duals[j].copy()


@dataclass(frozen=True)
class Binding:
    """One filler occupying one role of a basis."""

    filler: np.ndarray
    role_index: int


@dataclass(frozen=True)
class Tpr:
    """A superposition of bindings: matrix[i, j] = sum_k filler_k[i] * role_k[j]."""

    matrix: np.ndarray
    filler_dim: int = field(init=False)
    role_dim: int = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "filler_dim", m.shape[0])
        object.__setattr__(self, "role_dim", m.shape[1])


def make_role_basis(roles) -> RoleBasis:
    """Build duals for a list of role vectors.

    The duals are the rows of the (pseudo-)inverse of the matrix whose
    columns are the roles, so for orthonormal roles each dual equals its
    role, and for merely independent roles the duals come from the exact
    inverse. Linearly dependent roles are allowed; they yield
    ``exact=False`` and a nonzero ``max_dual_error``.
    """
    vecs = [as_vec(r) for r in roles]
    if not vecs:
        raise ValueError("need at least one role vector")
    dim = vecs[0].shape[0]
    for v in vecs:
        if v.shape[0] != dim:
            raise ValueError("all role vectors must share one dimension")
    r_mat = np.stack(vecs, axis=1)
    inv = invert_or_pinv(r_mat)
    duals = inv.matrix
    gram = duals @ r_mat  # should be the identity: row i is u_i . r_j
    max_err = float(np.abs(gram - np.eye(len(vecs))).max())
    return RoleBasis(
        roles=r_mat,
        duals=duals,
        exact=max_err < EXACT_DUAL_TOL,
        max_dual_error=max_err,
        cond=inv.cond,
    )


def bind_and_superpose(bindings, basis: RoleBasis) -> Tpr:
    """Sum of outer products filler_k (x) role_{index_k}.

    A role bound more than once simply accumulates; unbinding it then
    returns the sum of its fillers, which is the algebra's literal
    behavior.
    """
    if not bindings:
        raise ValueError("need at least one binding")
    fillers = [as_vec(b.filler) for b in bindings]
    fdim = fillers[0].shape[0]
    for f in fillers:
        if f.shape[0] != fdim:
            raise ValueError("all fillers must share one dimension")
    total = np.zeros((fdim, basis.role_dim))
    for f, b in zip(fillers, bindings):
        if not 0 <= b.role_index < basis.n_roles:
            raise IndexError(f"role index {b.role_index} out of range")
        total += outer_product(f, basis.role(b.role_index))
    return Tpr(total)


def unbind(t: Tpr, basis: RoleBasis, role_index: int) -> np.ndarray:
    """Recover the filler of one role: t.matrix @ duals[role_index]."""
    if not 0 <= role_index < basis.n_roles:
        raise IndexError(f"role index {role_index} out of range")
    if basis.role_dim != t.role_dim:
        raise ValueError(
            f"basis role dimension {basis.role_dim} != structure role dimension {t.role_dim}"
        )
    return t.matrix @ basis.dual(role_index)


def generate_sequence(t: Tpr, basis: RoleBasis, role_order) -> list[np.ndarray]:
    """Emit fillers one at a time by unbinding roles in the given order."""
    return [unbind(t, basis, j) for j in role_order]
