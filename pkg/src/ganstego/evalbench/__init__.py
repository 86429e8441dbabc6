from .bench import BenchConfig, BenchmarkError, bits_as_image, run_benchmark
from .detectors import (
    CnnDetector, Detector, balanced_accuracy, chi_square_detector, chi_square_lsb_score,
    detection_accuracy,
)
from .methods import Embedder, MethodSpec
from .report import (
    REFERENCE_LABEL, REFERENCE_VALUES, BenchReport, Cell, emit_report, flag_best, reference_cells,
)
