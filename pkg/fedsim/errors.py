from __future__ import annotations


class FedSimError(Exception):
    """Base de todas as falhas levantadas pelo simulador."""


class AudioError(FedSimError):
    pass


class NotWav(AudioError):
    pass


class UnsupportedEncoding(AudioError):
    pass


class TruncatedFile(AudioError):
    pass


class InvalidCorpusSpec(AudioError):
    pass


class MalformedManifest(AudioError):
    pass


class FeatureFileError(FedSimError):
    pass


class MalformedHeader(FeatureFileError):
    pass


class MalformedPayload(FeatureFileError):
    pass


class DimensionMismatch(FeatureFileError):
    pass


class UnknownLabel(FeatureFileError):
    pass


class FeatureError(FedSimError):
    pass


class InvalidLength(FeatureError):
    pass


class BadFrameLength(FeatureError):
    pass


class TooManyMels(FeatureError):
    pass


class InvalidFeatureConfig(FeatureError):
    pass


class ClipTooShort(FeatureError):
    pass


class SegmentLongerThanClip(FeatureError):
    pass


class InvalidSegmentation(FeatureError):
    pass


class EmptyTrainingSet(FeatureError):
    pass


class PartitionError(FedSimError):
    pass


class EmptyInput(PartitionError):
    pass


class RetryExhausted(PartitionError):
    pass


class CorruptionError(FedSimError):
    pass


class InfeasibleSpec(CorruptionError, PartitionError):
    """Especificação de erro de rótulo ou de Dirichlet que não pode ser atendida."""


class SilentClip(CorruptionError):
    pass


class LengthMismatch(CorruptionError):
    pass


class ZeroNoise(CorruptionError):
    pass


class ClassCountMismatch(CorruptionError):
    pass


class ModelError(FedSimError):
    pass


class ShapeMismatch(ModelError):
    pass


class EmptyShard(ModelError):
    pass


class CheckpointError(ModelError):
    pass


class FederationError(FedSimError):
    pass


class LayoutMismatch(FederationError):
    pass


class EmptyTestSet(FederationError):
    pass


class MetricError(FedSimError):
    pass


class MetricLengthMismatch(MetricError):
    pass


class EmptyMetricInput(MetricError):
    pass


class ConfigError(FedSimError):
    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
