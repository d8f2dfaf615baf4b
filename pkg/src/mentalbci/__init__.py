"""Band-pass + CSP/TRCSP/FBCSP + LDA/SVM/KNN pipeline for binary EEG mental-task decoding."""

__version__ = "0.1.0"

from .dataio import (ClassLabel, EpochedDataset, SplitIndices, SynthSpec, crop_window,
                     read_dataset, select_pair, stratified_split, synth_multiclass,
                     synth_two_class, write_dataset)
from .dsp import (BandSpec, FilterBank, IIRFilter, apply_filter, apply_filtfilt,
                  design_butterworth_bandpass, filter_dataset, frequency_response,
                  make_filter_bank)
from .spatial import (FBCSPModel, SpatialFilters, TRCSPParams, build_feature_set,
                      class_mean_covariance, fit_fbcsp, log_variance_features,
                      mutual_information, solve_csp, solve_trcsp, spatial_filter_trial,
                      transform_fbcsp, trial_covariance)
from .classify import (KNNModel, LDAModel, SVMModel, TrainConfig, fit_knn, fit_lda, fit_svm,
                       predict_knn, predict_lda, predict_svm, rbf_kernel)
from .evaluation import (CSP, FBCSP, TRCSP, AccuracyResult, Classifier, ConfusionCounts,
                         EvalConfig, PipelineSpec, Preprocessing, ResultsTable, accuracy,
                         evaluate, evaluate_all_pairs, render_table, run_repetition)
