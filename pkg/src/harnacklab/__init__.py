"""Numerical laboratory for doubly nonlinear parabolic equations with
space-time Muckenhoupt weights: intrinsic cylinder geometry, a monotone
implicit solver, and empirical verifiers for the sup/inf estimates and their
supporting lemmas.
"""

from .weights import (AdmissibilityError, AInfinityFit, Box, DivergenceError,
                      DoublingReport, Exponents, IntegralReport,
                      MuckenhouptReport, QuadratureSpec, WEIGHT_FAMILIES,
                      Weight, a_infinity_estimate, admissible_exponents,
                      box_integral, box_integral_report, catalog_weight,
                      cylinder_average, cylinder_average_report,
                      doubling_estimate, muckenhoupt_constant,
                      register_weight_family)
from .geometry import (BracketError, Cylinder, HeightSolve, cylinder_family,
                       harnack_cylinders, height_table, intrinsic_height,
                       intrinsic_height_supform, scaled_cylinder, subcylinder)
from .solver import (Boundary, EigenPair, Field, Flux, Grid, GrowthAudit,
                     StepFailure, StepReport, TestFunction, audit_growth,
                     field_load, field_save, field_slice_csv, model_flux,
                     p_eigenpair_1d, solve, step, weak_residual)
from .estimates import (BOMBIERI_C_THETA, BombieriInput, BombieriVerdict,
                        CompactFunction, HarnackReport, IterationVerdict,
                        LevelSetProfile, LevelSetVerdict, LogLevelVerdict,
                        MamedovVerdict, MoserReport, bombieri_check,
                        harnack_check, interpolation_check, iteration_check,
                        iteration_constant, iteration_sample,
                        levelset_profile_check, log_levelset_check,
                        mamedov_check, median_level, moser_check,
                        steklov_average)
from .harness import (CheckVerdict, ExperimentConfig, RunReport,
                      config_reference, emit_report, run_harnack_pipeline,
                      run_lemma_suites, run_weight_survey, survey_csv)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "AInfinityFit", "BOMBIERI_C_THETA", "Boundary",
    "BombieriInput", "BombieriVerdict", "Box", "BracketError", "CheckVerdict",
    "CompactFunction", "Cylinder", "DivergenceError", "DoublingReport",
    "EigenPair", "ExperimentConfig", "Exponents", "Field", "Flux", "Grid",
    "GrowthAudit", "HarnackReport", "HeightSolve", "IntegralReport",
    "IterationVerdict", "LevelSetProfile", "LevelSetVerdict",
    "LogLevelVerdict", "MamedovVerdict", "MoserReport", "MuckenhouptReport",
    "QuadratureSpec", "RunReport", "StepFailure", "StepReport",
    "TestFunction", "WEIGHT_FAMILIES", "Weight", "a_infinity_estimate",
    "admissible_exponents", "audit_growth", "bombieri_check",
    "box_integral", "box_integral_report", "catalog_weight",
    "config_reference", "cylinder_average", "cylinder_average_report",
    "cylinder_family", "doubling_estimate", "emit_report", "field_load",
    "field_save", "field_slice_csv", "harnack_check", "harnack_cylinders",
    "height_table", "interpolation_check", "intrinsic_height",
    "intrinsic_height_supform", "iteration_check", "iteration_constant",
    "iteration_sample", "levelset_profile_check", "log_levelset_check",
    "mamedov_check", "median_level", "model_flux", "moser_check",
    "muckenhoupt_constant", "p_eigenpair_1d", "register_weight_family",
    "run_harnack_pipeline", "run_lemma_suites", "run_weight_survey",
    "scaled_cylinder", "solve", "step", "steklov_average", "subcylinder",
    "survey_csv", "weak_residual",
]
