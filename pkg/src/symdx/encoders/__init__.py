from .bundle import EncoderBundle, load_bundle
from .preprocess import ImageTensor, PreprocessConstants, preprocess_image
from .tokenizer import BpeTokenizer, TokenSequence

__all__ = [
    "BpeTokenizer",
    "TokenSequence",
    "ImageTensor",
    "PreprocessConstants",
    "preprocess_image",
    "EncoderBundle",
    "load_bundle",
]
