"""skycast: air-quality grading from sky images.

Gabor-texture statistics feed from-scratch Random Forest / KNN / CNN
classifiers over a five-grade AQI label space, and a deterministic procedural
renderer produces grade-conditioned counterfactual skies whose fidelity is
checked by reclassification. Exposed as a library, a CLI (`skycast`), and an
HTTP service.
"""

__version__ = "0.1.0"

from .aqi import AqiGrade, composite_aqi, grade_of_aqi, recommendation_of_grade
from .features import GaborBank, extract_features
from .imaging import RasterImage, SkyMask, decode_image, encode_png, resize_bilinear
from .synth import prompt_for_grade, render_variant, ssim, synthesize_all_grades

__all__ = [
    "__version__",
    "AqiGrade",
    "GaborBank",
    "RasterImage",
    "SkyMask",
    "composite_aqi",
    "decode_image",
    "encode_png",
    "extract_features",
    "grade_of_aqi",
    "prompt_for_grade",
    "recommendation_of_grade",
    "render_variant",
    "resize_bilinear",
    "ssim",
    "synthesize_all_grades",
]
