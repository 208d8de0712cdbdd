"""Aircraft surface damage localization toolkit.

Library + CLI covering: pinhole projection and back-projection, mapping
2D damage detections onto 3D point clouds with optional z-buffer
occlusion culling, the IoU/GIoU/DIoU/CIoU/inner-IoU/inner-CIoU box loss
family with analytic gradients and a descent harness, detection
evaluation (P/R/F1, AP, mAP), YOLO/COCO annotation handling, backbone
parameter accounting, and a deterministic synthetic fuselage simulator
that provides ground truth for end-to-end checks.
"""

from .boxes import BBox2D, CenterBox, corner_iou
from .cloud import PlyFormatError, PointCloud, read_ply, read_point_cloud, read_xyz, write_ply, write_xyz
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    PixelDepth,
    ProjectionMatrix,
    SingularProjectionError,
    back_project,
    back_project_pixels,
    build_projection,
    load_camera_json,
    project_point,
    project_points,
    save_camera_json,
)
from .localization import (
    LocalizationOptions,
    LocalizationResult,
    localize_damage,
    write_colored_cloud,
    write_report_json,
    zbuffer_visibility,
)
from .losses import (
    LOSS_IDS,
    NonDifferentiableError,
    RegressionStep,
    ciou_alpha,
    ciou_loss,
    diou_loss,
    giou_loss,
    inner_ciou_loss,
    inner_iou,
    iou,
    loss_gradient,
    loss_value,
    regress_box,
    sample_box_pair,
    steps_until,
)
from .metrics import (
    DetectionRecord,
    EvaluationReport,
    GroundTruthRecord,
    MatchResult,
    PRCounts,
    average_precision,
    evaluate,
    match_detections,
    mean_ap,
    precision_recall_f1,
)
from .annotations import (
    AIRSD_CLASSES,
    AnnotationFormatError,
    AnnotationSet,
    ImageInfo,
    convert,
    dataset_stats,
    parse_coco,
    parse_yolo,
    write_coco,
    write_yolo,
)
from .backbone import (
    BackboneSpec,
    LayerSpec,
    backbone_summary,
    builtin_backbone,
    param_count,
    parse_backbone_spec,
    reduction_ratio,
    shape_propagate,
)
from .simulator import (
    CameraRigSpec,
    SceneSpec,
    SimulatedScene,
    SurfacePatch,
    best_view_for_patch,
    generate_camera_ring,
    generate_scene,
    ground_truth_bbox,
    patch_anchor,
    visible_patch_indices,
)

__version__ = "0.1.0"
