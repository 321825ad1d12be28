"""Re-identification attacks on location check-in data, restricted to venue classes."""

__version__ = "0.1.0"

from .attack import ModelBank, UserModel, build_user_model, identify, log_likelihood
from .errors import (
    ConfigurationError,
    ExperimentError,
    FeatureError,
    ReidError,
    UndefinedCorrelationError,
    ValidationError,
)
from .evaluation import (
    AttackResult,
    ExperimentConfig,
    relative_accuracy,
    run_experiment,
    split_train_test,
    sweep,
    user_entropy,
    user_profiles,
)
from .features import VenueClassSpec, VenueFeatures, compute_features, filter_by_class
from .ingest import CheckIn, Dataset, Venue, filter_active_users, parse_checkins, parse_venues
from .stats import pearson
from .synth import SynthSpec, generate, make_oracle_instance
