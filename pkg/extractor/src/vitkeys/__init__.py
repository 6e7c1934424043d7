"""vitkeys: export ViT patch representations as SSAM v1 feature files.

For each image, the keys of the last attention layer (one d-vector per
patch, CLS token dropped) are written in the binary format the siamseg
engine consumes. A deterministic stub model is included so the exporter
and its file format can be exercised without model weights or a network.
"""

from .export import ExtractorConfig, extract, write_ssam
from .models import DinoKeyModel, ImageDecodeError, ModelLoadError, StubModel, load_model
from .preprocess import load_image_rgb, resize_to_patch_multiple

__version__ = "0.1.0"
