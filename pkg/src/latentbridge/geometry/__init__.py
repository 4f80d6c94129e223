from .io import read_cloud, read_pcl, read_xyz, raw_size, write_cloud, write_pcl, write_xyz
from .metrics import chamfer, chamfer_and_grad, normalize, pointsim
from .shapes import (
    DEFAULT_POINTS,
    KINDS,
    ShapeSpec,
    gen_shape,
    make_dataset,
    random_spec,
    sample_surface,
    split_indices,
    split_sizes,
)

__all__ = [
    "DEFAULT_POINTS",
    "KINDS",
    "ShapeSpec",
    "chamfer",
    "chamfer_and_grad",
    "gen_shape",
    "make_dataset",
    "normalize",
    "pointsim",
    "random_spec",
    "raw_size",
    "read_cloud",
    "read_pcl",
    "read_xyz",
    "sample_surface",
    "split_indices",
    "split_sizes",
    "write_cloud",
    "write_pcl",
    "write_xyz",
]
