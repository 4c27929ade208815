"""Exception hierarchy shared across the package.

The CLI maps these onto its stable exit codes, so new failure modes
should subclass one of the existing families rather than raising bare
exceptions.
"""


class SymdxError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(SymdxError):
    """Embeddings of different lengths were combined."""


class NormalizationError(SymdxError):
    """A zero or non-finite vector cannot be normalized."""


class EmptyDescriptorError(SymdxError):
    """A class was scored with no symptom embeddings."""


class DecodeError(SymdxError):
    """Image bytes could not be decoded into pixels."""


class BackendError(SymdxError):
    """The inference backend failed while executing a graph."""


class AssetError(SymdxError):
    """A bundle asset is missing, malformed, or fails its hash check."""


class TransportError(SymdxError):
    """The LLM endpoint could not be reached and no cache entry exists."""


class EmptyResponseError(SymdxError):
    """The LLM returned an empty completion."""


class SymptomParseError(SymdxError):
    """No usable symptom lines survived parsing of an LLM answer."""


class KnowledgeBaseError(SymdxError):
    """Knowledge-base construction failed; message names the class."""


class SchemaError(SymdxError):
    """A persisted file violates its schema."""


class SchemaVersionError(SchemaError):
    """A persisted file declares a schema version newer than supported."""


class ManifestError(SymdxError):
    """A dataset manifest is malformed or inconsistent with the KB."""


class ConfigMismatchError(SymdxError):
    """Configured inputs disagree (e.g. KB classes vs. bundle fingerprint)."""
