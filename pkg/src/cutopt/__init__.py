"""Level-set shape and topology optimization of 2D linear-elastic structures with CutFEM."""
from .config import RunConfig, build_problem, load_config
from .elasticity import ElasticityProblem, ElasticMaterial, CutFEMParameters
from .levelset import LevelSetField, classify, extract_geometry, reinitialize
from .mesh import DesignDomain, build_background_mesh, refine_uniform
from .shapeopt import OptimizationSettings, ShapeOptimizer, optimize

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "build_problem", "load_config", "ElasticityProblem", "ElasticMaterial",
    "CutFEMParameters", "LevelSetField", "classify", "extract_geometry", "reinitialize",
    "DesignDomain", "build_background_mesh", "refine_uniform", "OptimizationSettings",
    "ShapeOptimizer", "optimize",
]
