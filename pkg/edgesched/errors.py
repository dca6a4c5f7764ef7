# edgesched/errors.py


class EdgeSchedError(Exception):
    """Base class for edgesched errors."""

    message = "An unexpected error occurred."

    def __init__(self, message=None, payload=None):
        if message:
            self.message = message
        self.payload = payload
        super().__init__(self.message)

    def to_dict(self):
        rv = dict(self.payload or ())
        rv["message"] = self.message
        rv["error"] = type(self).__name__
        return rv


class InvalidBoxError(EdgeSchedError, ValueError):
    message = "Invalid bounding box."


class NoGroundTruthError(EdgeSchedError, ValueError):
    message = "no ground truth"


class FeatureExtractionError(EdgeSchedError):
    message = "Feature extraction failed."


class NormalizationError(EdgeSchedError, ValueError):
    message = "Normalizer needs at least 2 rows."


class ProfileError(EdgeSchedError, ValueError):
    message = "Invalid profile data."


class NoProfileError(ProfileError, KeyError):
    message = "no profile"

    def __str__(self):
        # KeyError would otherwise repr() the message
        return self.message


class ScoringError(EdgeSchedError, ValueError):
    message = "Invalid scoring input."


class InfeasibleError(ScoringError):
    message = "No candidate satisfies the constraints."


class LabelingError(EdgeSchedError, ValueError):
    message = "Label generation failed."


class TrainingError(EdgeSchedError):
    message = "Training failed."


class ConfigError(EdgeSchedError, ValueError):
    message = "Invalid configuration."
