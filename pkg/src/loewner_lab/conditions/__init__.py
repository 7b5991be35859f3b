"""Unforced crossings, crossing conditions, moduli and fjord events."""
from .avoid import PIXEL, AvoidableSet, Component, DomainRaster, avoidable_components, flood_check
from .constants import DIRECTIONS, PowerLawFit, convert_constants, fit_power_law
from .g2 import (annulus_family, annulus_grid, check_condition_G2, curve_report, default_radii, stopping_times,
                 unforced_crossing)
from .modulus import (ModulusResult, TopQuad, cut_annulus, l_shape, modulus_quad, rectangle, serial_moduli,
                      slabs)
from .report import COLUMNS, CrossingReport, merge_reports, wilson
from .sixarm import (SixArmWitness, count_multiple_crossings, detect_six_arm, multiple_crossing_exponents,
                     ratio_rows)

__all__ = [
    "PIXEL", "AvoidableSet", "Component", "DomainRaster", "avoidable_components", "flood_check",
    "DIRECTIONS", "PowerLawFit", "convert_constants", "fit_power_law",
    "annulus_family", "annulus_grid", "check_condition_G2", "curve_report", "default_radii", "stopping_times",
    "unforced_crossing", "ModulusResult", "TopQuad", "cut_annulus", "l_shape", "modulus_quad", "rectangle",
    "serial_moduli", "slabs", "COLUMNS", "CrossingReport", "merge_reports", "wilson",
    "SixArmWitness", "count_multiple_crossings", "detect_six_arm", "multiple_crossing_exponents", "ratio_rows",
]
