"""Gap events, features and the gap-acceptance classifiers."""

from .features import (FEATURE_NAMES, GAP_CSV_HEADER, ExtractedFeatures, FeatureVector,
                       GapEvent, Label, crossing_start_time, detect_gap_start,
                       events_to_arrays, extract_features, feature_vector, label_gap,
                       nearest_approaching, read_gap_events, traffic_gap_for,
                       vehicle_passed, write_gap_events)
from .models import (GapModel, ModelKind, evaluate, fit_model, load_model, model_from_dict,
                     model_to_dict, predict_probability, predict_proba, rank_features,
                     save_model, select_svm_C, stratified_split, train)
from .svm import ConvergenceError, KernelSVM, fit_platt, fit_svm, platt_probability, poly_kernel
