"""embextract: encode images and prompts into embclass-compatible stores."""

from .encoders import DecodeError, Encoder, HashEncoder, HubEncoder, decode_image, load_encoder
from .extract import build_manifest, extract_images, extract_prompts, read_corrections
from .job import ExtractionJob
from .templates import (
    DEFAULT_TEMPLATES,
    NO_CONTEXT_TEMPLATE,
    REQUIRED_NAME_SETS,
    STANDARD_TEMPLATES,
    expand_prompts,
    instantiate,
    validate_template,
)

__all__ = [
    "DEFAULT_TEMPLATES",
    "DecodeError",
    "Encoder",
    "ExtractionJob",
    "HashEncoder",
    "HubEncoder",
    "NO_CONTEXT_TEMPLATE",
    "REQUIRED_NAME_SETS",
    "STANDARD_TEMPLATES",
    "build_manifest",
    "decode_image",
    "expand_prompts",
    "extract_images",
    "extract_prompts",
    "instantiate",
    "load_encoder",
    "read_corrections",
    "validate_template",
]
