from .checkpoint import Checkpoint, CheckpointError, ConfigHashMismatch
from .config import DESK_CONFIG, TrainConfig
from .data import CoverDataset, DatasetError, list_pngs
from .inference import StegoModel, embed_with_model, extract_with_model
from .loop import NonFiniteLoss, TraceRecord, Trainer, TrainTrace, load_models, train_run
