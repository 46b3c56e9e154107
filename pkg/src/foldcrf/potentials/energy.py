"""Weighted combination of energy components over a conformation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from foldcrf.geometry import (
    BackboneAtoms,
    QuadrilateralTable,
    build_backbone_atoms,
    place_hn,
    radius_of_gyration,
)
from foldcrf.potentials.esp import EspTable, esp_energy
from foldcrf.potentials.hbond import HbondTable, hbond_energy

# order of the four weights accepted on the command line
WEIGHT_ORDER = ("epad", "table", "hbond", "esp")


class Conformation:
    """A Cα trace with its residue types and, on demand, rebuilt backbone atoms.

    ``sequence`` is usually a one-letter string but may be any sequence of
    type tokens (for example position-specific labels); backbone building
    then treats every residue as unknown.
    """

    def __init__(self, trace, sequence, backbone: BackboneAtoms | None = None,
                 quad_table: QuadrilateralTable | None = None):
        self.trace = np.asarray(trace, dtype=float)
        if len(sequence) != len(self.trace):
            raise ValueError("sequence and trace lengths differ")
        self.sequence = sequence
        self.quad_table = quad_table
        self._backbone = backbone

    def __len__(self):
        return len(self.trace)

    @property
    def backbone(self) -> BackboneAtoms | None:
        if self._backbone is None and self.quad_table is not None:
            seq = self.sequence if isinstance(self.sequence, str) else "X" * len(self)
            self._backbone = place_hn(build_backbone_atoms(self.trace, seq, self.quad_table))
        return self._backbone

    def with_trace(self, trace) -> "Conformation":
        return Conformation(trace, self.sequence, None, self.quad_table)


@dataclass
class EspComponent:
    table: EspTable
    needs_backbone = False

    def __call__(self, conf: Conformation) -> float:
        return esp_energy(self.table, conf)


@dataclass
class HbondComponent:
    table: HbondTable
    needs_backbone = True

    def __call__(self, conf: Conformation) -> float:
        bb = conf.backbone
        if bb is None:
            raise ValueError("hydrogen-bond energy needs backbone atoms (give a quadrilateral table)")
        return hbond_energy(self.table, bb)


@dataclass
class SumComponent:
    """Sum of several pair potentials (e.g. Cα and non-Cα parts of one term)."""

    parts: list

    @property
    def needs_backbone(self) -> bool:
        return any(getattr(p, "atoms", ("CA", "CA")) != ("CA", "CA") for p in self.parts)

    def __call__(self, conf: Conformation) -> float:
        return float(sum(p.energy(conf) for p in self.parts))


class RadiusComponent:
    """Radius of gyration of the Cα trace, for compaction runs."""

    needs_backbone = False

    def __call__(self, conf: Conformation) -> float:
        return radius_of_gyration(conf.trace)


@dataclass
class EnergyReport:
    total: float
    parts: dict[str, float] = field(default_factory=dict)


@dataclass
class EnergyModel:
    components: dict[str, Callable[[Conformation], float]]
    weights: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.components:
            raise ValueError("an energy model needs at least one component")
        unknown = set(self.weights) - set(self.components)
        if unknown:
            raise ValueError(f"weights given for missing components: {', '.join(sorted(unknown))}")
        self.weights = {name: float(self.weights.get(name, 1.0)) for name in self.components}
        if not all(np.isfinite(w) for w in self.weights.values()):
            raise ValueError("energy weights must be finite")

    @property
    def needs_backbone(self) -> bool:
        return any(getattr(c, "needs_backbone", False) for c in self.components.values())

    def evaluate(self, conf: Conformation) -> EnergyReport:
        parts = {name: float(comp(conf)) for name, comp in self.components.items()}
        total = float(sum(self.weights[n] * v for n, v in parts.items()))
        return EnergyReport(total, parts)

    def __call__(self, conf: Conformation) -> float:
        return self.evaluate(conf).total


def total_energy(em: EnergyModel, conf: Conformation) -> float:
    return em.evaluate(conf).total


def parse_weights(text: str) -> dict[str, float]:
    """``w1,w2,w3,w4`` in the order epad, table, hbond, esp."""
    vals = [float(v) for v in text.split(",")]
    if len(vals) != len(WEIGHT_ORDER):
        raise ValueError(f"expected {len(WEIGHT_ORDER)} comma-separated weights, got {len(vals)}")
    return dict(zip(WEIGHT_ORDER, vals))
