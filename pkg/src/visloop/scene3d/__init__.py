"""3D imagination space: Gaussian scenes, splat rendering and conditional segmentation."""

from .gaussians import Camera, DegenerateCamera, GaussianScene
from .render import TopDownView, render_splats, render_topdown
from .segment import NoVotes, SegConfig, segment_conditional
from .space import Scene3D, new_space

__all__ = ["Camera", "DegenerateCamera", "GaussianScene", "TopDownView", "render_splats", "render_topdown",
           "NoVotes", "SegConfig", "segment_conditional", "Scene3D", "new_space"]
