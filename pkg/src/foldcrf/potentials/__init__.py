"""Knowledge-based energy terms and their weighted combination."""

from foldcrf.potentials.energy import (
    Conformation,
    EnergyModel,
    EnergyReport,
    EspComponent,
    HbondComponent,
    RadiusComponent,
    SumComponent,
    WEIGHT_ORDER,
    parse_weights,
    total_energy,
)
from foldcrf.potentials.epad import epad_energy, epad_nonca_potential, epad_potential
from foldcrf.potentials.esp import EspTable, coordination_counts, esp_build, esp_energy, esp_from_counts
from foldcrf.potentials.hbond import HbondGeometry, HbondTable, hbond_descriptors, hbond_energy
from foldcrf.potentials.reference import bin_masses, estimate_rg, reference_cdf, reference_state_density
from foldcrf.potentials.tables import (
    ConditionalTable,
    DistanceTable,
    PairPotential,
    build_conditional_table,
    build_distance_table,
    conditional_nonca_distribution,
    eligible_pairs,
    table_energy,
    table_potential,
)

__all__ = [
    "ConditionalTable",
    "Conformation",
    "DistanceTable",
    "EnergyModel",
    "EnergyReport",
    "EspComponent",
    "EspTable",
    "HbondComponent",
    "HbondGeometry",
    "HbondTable",
    "PairPotential",
    "RadiusComponent",
    "SumComponent",
    "WEIGHT_ORDER",
    "bin_masses",
    "build_conditional_table",
    "build_distance_table",
    "conditional_nonca_distribution",
    "coordination_counts",
    "eligible_pairs",
    "epad_energy",
    "epad_nonca_potential",
    "epad_potential",
    "esp_build",
    "esp_energy",
    "esp_from_counts",
    "estimate_rg",
    "hbond_descriptors",
    "hbond_energy",
    "parse_weights",
    "reference_cdf",
    "reference_state_density",
    "table_energy",
    "table_potential",
    "total_energy",
]
