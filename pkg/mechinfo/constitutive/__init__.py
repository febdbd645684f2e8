"""Material models, material-point integration and yield-surface analysis."""
from .analysis import (
    YieldLocus,
    lankford,
    normalized_yield_stress,
    uniaxial_direction,
    yield_locus,
    yield_stress_table,
)
from .models import (
    Hill48Swift,
    IsoElastic,
    MaterialModel,
    OrthoElastic,
    Yld2000Swift,
    elastic_part,
    is_inelastic,
    model_from_dict,
    model_to_dict,
)
from .return_mapping import (
    IntegrationResult,
    MaterialState,
    drive_uniaxial,
    elastic_stress,
    engineering,
    integrate,
    integrate_step,
    swift_flow_stress,
    tensorial,
    yield_value,
)
from .yield_functions import yld2000_normalization

__all__ = [
    "Hill48Swift",
    "IntegrationResult",
    "IsoElastic",
    "MaterialModel",
    "MaterialState",
    "OrthoElastic",
    "YieldLocus",
    "Yld2000Swift",
    "drive_uniaxial",
    "elastic_part",
    "elastic_stress",
    "engineering",
    "integrate",
    "integrate_step",
    "is_inelastic",
    "lankford",
    "model_from_dict",
    "model_to_dict",
    "normalized_yield_stress",
    "swift_flow_stress",
    "tensorial",
    "uniaxial_direction",
    "yield_locus",
    "yield_stress_table",
    "yield_value",
    "yld2000_normalization",
]
