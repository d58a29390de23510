"""Instance generators: stochastic multiclass, oblivious loss scripts and the
lower-bound family of hard instances.

All environments speak losses.  Label-based environments (stochastic and hard
instances) emit a context and the index of the single correct label; the
learner predicting ``a`` observes ``-1`` if ``a`` is correct and ``0``
otherwise, so every round is 1-sparse.  Scripts carry full loss vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .core import EnvError, InputError, LossVector, PolicyTable

SPARSITY_SLACK = 1e-12


# --------------------------------------------------------------------------
# specs
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StochasticMulticlassSpec:
    """I.i.d. example-label pairs: ``x ~ context_probs``, ``y | x ~ label_probs[x]``."""

    context_probs: np.ndarray
    label_probs: np.ndarray

    def __post_init__(self) -> None:
        cp = np.array(self.context_probs, dtype=np.float64)
        lp = np.array(self.label_probs, dtype=np.float64)
        if cp.ndim != 1 or lp.ndim != 2 or lp.shape[0] != cp.size or cp.size < 1 or lp.shape[1] < 1:
            raise InputError(f"context_probs has shape {cp.shape}, label_probs {lp.shape}; need (C,) and (C, K)")
        if cp.min() < 0 or lp.min() < 0:
            raise InputError("probabilities must be nonnegative")
        if abs(cp.sum() - 1) > 1e-9 or np.abs(lp.sum(axis=1) - 1).max() > 1e-9:
            raise InputError("context_probs and every row of label_probs must sum to 1")
        cp.setflags(write=False)
        lp.setflags(write=False)
        object.__setattr__(self, "context_probs", cp)
        object.__setattr__(self, "label_probs", lp)

    @property
    def num_contexts(self) -> int:
        return self.context_probs.size

    @property
    def num_actions(self) -> int:
        return self.label_probs.shape[1]

    def to_dict(self) -> dict:
        return {"context_probs": self.context_probs.tolist(), "label_probs": self.label_probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StochasticMulticlassSpec":
        return cls(d["context_probs"], d["label_probs"])


@dataclass(frozen=True)
class HardInstanceSpec:
    """Hard instance over C examples and labels ``0..K``.

    ``target=None`` is the null instance where no hypothesis beats the
    default label 0; ``target=(x, y)`` with ``y >= 1`` hides one rewarding
    example-label pair.
    """

    C: int
    K: int
    target: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.C < 1 or self.K < 1:
            raise InputError(f"need C, K >= 1, got C={self.C}, K={self.K}")
        if self.target is not None:
            x, y = (int(v) for v in self.target)
            if not 0 <= x < self.C or not 1 <= y <= self.K:
                raise InputError(f"target {self.target} must satisfy 0 <= x < C and 1 <= y <= K")
            object.__setattr__(self, "target", (x, y))

    @property
    def num_contexts(self) -> int:
        return self.C

    @property
    def num_actions(self) -> int:
        return self.K + 1

    def to_dict(self) -> dict:
        return {"C": self.C, "K": self.K, "target": None if self.target is None else list(self.target)}

    @classmethod
    def from_dict(cls, d: dict) -> "HardInstanceSpec":
        t = d.get("target")
        return cls(int(d["C"]), int(d["K"]), None if t is None else (int(t[0]), int(t[1])))


def validate_sparsity(loss: LossVector) -> bool:
    """Check ``sum(loss**2) <= s``; raises :class:`EnvError` on violation."""
    sq = loss.squared_norm
    if sq > loss.declared_sparsity + SPARSITY_SLACK:
        raise EnvError(f"sparsity violated: squared norm {sq!r} exceeds s={loss.declared_sparsity!r}")
    return True


@dataclass(frozen=True, eq=False)
class AdversarialScript:
    """Oblivious sequence of (context, loss vector) pairs."""

    contexts: np.ndarray
    losses: np.ndarray
    sparsity: float = 1.0

    def __post_init__(self) -> None:
        ctx = np.array(self.contexts, dtype=np.int64)
        L = np.array(self.losses, dtype=np.float64)
        if ctx.ndim != 1 or L.ndim != 2 or L.shape[0] != ctx.size or ctx.size < 1:
            raise InputError("script needs T contexts and a (T, K) loss matrix")
        if ctx.min() < 0:
            raise InputError("contexts must be nonnegative indices")
        if not np.all(np.isfinite(L)) or np.abs(L).max() > 1.0:
            raise InputError("every scripted loss must lie in [-1, 1]")
        norms = np.einsum("ij,ij->i", L, L)
        bad = np.flatnonzero(norms > self.sparsity + SPARSITY_SLACK)
        if bad.size:
            t = int(bad[0])
            raise EnvError(f"sparsity violated at round {t}: squared norm {norms[t]!r} exceeds s={self.sparsity!r}")
        ctx.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "contexts", ctx)
        object.__setattr__(self, "losses", L)

    def __len__(self) -> int:
        return self.contexts.size

    @property
    def num_actions(self) -> int:
        return self.losses.shape[1]

    def to_dict(self) -> dict:
        return {"contexts": self.contexts.tolist(), "losses": self.losses.tolist(), "sparsity": self.sparsity}

    @classmethod
    def from_dict(cls, d: dict) -> "AdversarialScript":
        return cls(d["contexts"], d["losses"], float(d.get("sparsity", 1.0)))


# --------------------------------------------------------------------------
# single steps
# --------------------------------------------------------------------------


def stochastic_step(spec: StochasticMulticlassSpec, rng: np.random.Generator) -> tuple[int, int]:
    x, y = sample_stochastic(spec, rng, 1)
    return int(x[0]), int(y[0])


def sample_stochastic(spec: StochasticMulticlassSpec, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` i.i.d. (context, label) pairs with two uniforms per pair."""
    u = rng.random((n, 2))
    ccdf = np.cumsum(spec.context_probs)
    x = np.minimum(np.searchsorted(ccdf, u[:, 0], side="right"), spec.num_contexts - 1)
    lcdf = np.cumsum(spec.label_probs, axis=1)
    y = np.empty(n, dtype=np.int64)
    for c in range(spec.num_contexts):
        sel = x == c
        y[sel] = np.searchsorted(lcdf[c], u[sel, 1], side="right")
    np.minimum(y, spec.num_actions - 1, out=y)
    return x.astype(np.int64), y.astype(np.int64)


def script_step(script: AdversarialScript, t: int) -> tuple[int, LossVector]:
    if not 0 <= t < len(script):
        raise InputError(f"round {t} outside script of length {len(script)}")
    loss = LossVector(script.losses[t], script.sparsity)
    validate_sparsity(loss)
    return int(script.contexts[t]), loss


# --------------------------------------------------------------------------
# hard instances
# --------------------------------------------------------------------------


def hard_instance_probability_table(spec: HardInstanceSpec) -> list[list[Fraction]]:
    """Exact label distribution ``P[y | x]`` for every example, as fractions."""
    K = spec.K
    base = [Fraction(1, 3)] + [Fraction(2, 3 * K)] * K
    rows = [list(base) for _ in range(spec.C)]
    if spec.target is not None:
        x, y = spec.target
        row = [Fraction(1, 3)] + [Fraction(1, K * K)] * K
        row[y] = Fraction(2, 3) - Fraction(K - 1, K * K)
        rows[x] = row
    return rows


def hard_instance_expected_rewards(spec: HardInstanceSpec) -> np.ndarray:
    """Expected reward of predicting each label at each example, shape (C, K+1).

    Rewards are indicator vectors, so this is the label distribution itself.
    """
    return np.array([[float(v) for v in row] for row in hard_instance_probability_table(spec)])


def hard_instance_as_stochastic(spec: HardInstanceSpec) -> StochasticMulticlassSpec:
    return StochasticMulticlassSpec(np.full(spec.C, 1.0 / spec.C), hard_instance_expected_rewards(spec))


def hard_instance_step(spec: HardInstanceSpec, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Uniform example and a standard-basis reward vector over labels ``0..K``."""
    x, y = sample_stochastic(hard_instance_as_stochastic(spec), rng, 1)
    r = np.zeros(spec.K + 1)
    r[y[0]] = 1.0
    return int(x[0]), r


def build_hard_class(C: int, K: int) -> PolicyTable:
    """Hypothesis class of size ``C*K + 1`` over labels ``0..K``.

    Row 0 always predicts label 0.  Row ``1 + x*K + (y-1)`` predicts ``y`` at
    example ``x`` and 0 elsewhere.
    """
    if C < 1 or K < 1:
        raise InputError(f"need C, K >= 1, got C={C}, K={K}")
    table = np.zeros((C * K + 1, C), dtype=np.int64)
    for x in range(C):
        for y in range(1, K + 1):
            table[hard_hypothesis_index(x, y, K), x] = y
    return PolicyTable(table, K + 1)


def hard_hypothesis_index(x: int, y: int, K: int) -> int:
    return 1 + x * K + (y - 1)


# --------------------------------------------------------------------------
# generators and transformers
# --------------------------------------------------------------------------


def random_multiclass_instance(N: int, C: int, K: int, seed: int,
                               concentration: float = 1.0) -> tuple[StochasticMulticlassSpec, PolicyTable]:
    """Random stochastic multiclass instance with a random policy table.

    Contexts are uniform, label distributions are Dirichlet, and policy ``i``
    predicts label ``i mod K`` on context 0 so that every label is covered
    whenever ``N >= K``; the rest of the table is uniform at random.
    """
    if min(N, C, K) < 1:
        raise InputError("N, C, K must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    label_probs = rng.dirichlet(np.full(K, concentration), size=C)
    table = rng.integers(0, K, size=(N, C))
    table[:, 0] = np.arange(N) % K
    return StochasticMulticlassSpec(np.full(C, 1.0 / C), label_probs), PolicyTable(table, K)


def duplicate_examples(spec: StochasticMulticlassSpec, table: PolicyTable,
                       copies: int) -> tuple[StochasticMulticlassSpec, PolicyTable, np.ndarray]:
    """Replace random labels by deterministic ones on duplicated examples.

    Every example ``x`` becomes ``copies`` examples of probability
    ``P(x)/copies`` each, and each copy gets a point-mass label.  Labels are
    apportioned to copies by largest remainder so that the label frequencies
    over the copies approximate ``P(y | x)``.  Hypotheses keep their
    prediction on every copy.

    Returns:
        (new spec, expanded table, origin) where ``origin[j]`` is the original
        example of new example ``j``.
    """
    if copies < 1:
        raise InputError("copies must be >= 1")
    C, K = spec.num_contexts, spec.num_actions
    if table.num_contexts != C or table.num_actions != K:
        raise InputError("table does not match the spec's C and K")
    origin = np.repeat(np.arange(C), copies)
    labels = np.empty(C * copies, dtype=np.int64)
    for x in range(C):
        quota = spec.label_probs[x] * copies
        counts = np.floor(quota).astype(np.int64)
        rest = copies - counts.sum()
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:rest]] += 1
        labels[x * copies:(x + 1) * copies] = np.repeat(np.arange(K), counts)
    label_probs = np.zeros((C * copies, K))
    label_probs[np.arange(C * copies), labels] = 1.0
    new_spec = StochasticMulticlassSpec(np.repeat(spec.context_probs / copies, copies), label_probs)
    return new_spec, PolicyTable(table.table[:, origin], K), origin


# --------------------------------------------------------------------------
# environment wrappers used by the harness
# --------------------------------------------------------------------------


class LabelEnvironment:
    """Stochastic label-emitting environment with a known policy class.

    Attributes:
        expected_loss: ``(C, K)`` table of expected shifted losses
            ``-P(y = a | x)``, used for pseudo-regret.
    """

    kind = "stochastic"

    def __init__(self, spec: StochasticMulticlassSpec, table: PolicyTable, name: str = "stochastic"):
        if table.num_contexts != spec.num_contexts or table.num_actions != spec.num_actions:
            raise InputError(
                f"policy table (C={table.num_contexts}, K={table.num_actions}) does not match "
                f"environment (C={spec.num_contexts}, K={spec.num_actions})"
            )
        self.spec = spec
        self.policy_table = table
        self.name = name
        self.sparsity = 1.0
        self.expected_loss = -spec.label_probs

    @property
    def num_contexts(self) -> int:
        return self.spec.num_contexts

    @property
    def num_actions(self) -> int:
        return self.spec.num_actions

    def sample(self, rng: np.random.Generator, T: int) -> tuple[np.ndarray, np.ndarray]:
        return sample_stochastic(self.spec, rng, T)

    def policy_expected_losses(self) -> np.ndarray:
        """Per-round expected loss of every policy."""
        cols = np.arange(self.num_contexts)
        per_ctx = self.expected_loss[cols[None, :], self.policy_table.table]  # (N, C)
        return per_ctx @ self.spec.context_probs


class HardEnvironment(LabelEnvironment):
    kind = "hard"

    def __init__(self, spec: HardInstanceSpec):
        super().__init__(hard_instance_as_stochastic(spec), build_hard_class(spec.C, spec.K), name="hard")
        self.hard_spec = spec


class ScriptEnvironment:
    kind = "script"
    expected_loss = None

    def __init__(self, script: AdversarialScript, table: PolicyTable):
        if table.num_actions != script.num_actions:
            raise InputError("policy table and script disagree on K")
        if script.contexts.max() >= table.num_contexts:
            raise InputError("script uses a context outside the policy table")
        self.script = script
        self.policy_table = table
        self.name = "script"
        self.sparsity = script.sparsity

    @property
    def num_contexts(self) -> int:
        return self.policy_table.num_contexts

    @property
    def num_actions(self) -> int:
        return self.script.num_actions


Environment = Union[LabelEnvironment, ScriptEnvironment]
