from .precision import get_precision_name, get_real_t, get_test_tol
from .io import (
    canonical_json,
    config_hash,
    load_checkpoint,
    read_json,
    read_metric_log,
    save_checkpoint,
    write_json,
    write_metric_log,
)
from .log import configure_logging
from .plot_metrics import (
    create_figure_and_axes,
    plot_learning_curves,
    save_and_clear_fig,
)
