from .classifier import EmotionClassifier, ReferenceClassifier, TinyEmotionNet, load_classifier
from .disc_f1 import critic_scores, discriminator_f1, f1, f1_from_scores, f1_report
from .fed import FeatureStats, MetricError, feature_stats, fed_score, frechet_distance
from .report import write_report
from .smoothness import (
    INTENSITIES,
    average_smoothness,
    confidence_series,
    series_smoothness,
    smoothness_by_emotion,
    smoothness_score,
)
