"""roomforge: prompt-driven 3D asset generation and room assembly.

The pipeline runs prompts -> oracle multi-view rendering -> voxel radiance
field training -> isosurface meshing -> scene assembly -> ray-traced
previews, entirely self-contained.
"""

__version__ = "0.1.0"
