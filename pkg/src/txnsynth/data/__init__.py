from .preprocess import (
    AuxScaler,
    PreprocessConfig,
    PreprocessMetadata,
    filter_active_clients,
    inverse_log_transform,
    inverse_log_values,
    log_transform,
    train_test_split,
)
from .simulator import SimulatorConfig, simulate_population
from .tables import (
    AUX_COLUMNS,
    DEFAULT_CATEGORIES,
    AuxTable,
    ProfileTable,
    load_aux_csv,
    load_profiles_csv,
    save_aux_csv,
    save_profiles_csv,
)
