"""scenestyle: image- and text-guided stylization of labeled 3D indoor scenes.

Pipeline: structure texture retrieval, per-object texture-part discovery,
scene-wide base color assignment, and per-object local neural style fields,
all driven by a pluggable image/text embedding backend.
"""

from .core import (
    OptimizerConfig,
    SceneDescription,
    SceneObject,
    StructureElement,
    StyleSpec,
    TriangleMesh,
    ValidatedScene,
    delta_e76,
    rgb_delta_e,
    rgb_to_lab,
    validate_scene,
)
from .geometry import (
    FrequencyMatrix,
    PartLabeling,
    SegmentGraph,
    SegmentationParams,
    SpectralBasis,
    fourier_features,
    laplace_beltrami_basis,
    segment_adjacency,
    super_segment,
)
from .losses import (
    BandOracleBackend,
    ClipEmbeddingBackend,
    EmbeddingBackend,
    MockOracleBackend,
    clip_loss,
    clip_scene_loss,
    hist_distance,
    hist_loss,
    soft_color_histogram,
)
from .partdiscovery import (
    DiscoveryConfig,
    SegmentColorTable,
    discover_parts,
    merge_segments,
    optimize_segment_colors,
)
from .pipeline import PipelineConfig, PipelineState, run_pipeline
from .render import (
    CameraConfig,
    CameraPose,
    RenderSettings,
    augment_view_crop,
    composite_background,
    directional_prompt,
    rasterize,
    sample_object_camera,
    scene_camera_set,
)
from .stylize import (
    BaseColorTable,
    LocalStyleField,
    StructureAssignment,
    TextureEntry,
    TextureLibrary,
    assign_base_colors,
    compose_style_prompt,
    eval_final_colors,
    retrieve_structure_textures,
    score_structure_candidate,
    train_lnsf,
    train_lnsf_with_displacement,
)

__version__ = "0.1.0"
