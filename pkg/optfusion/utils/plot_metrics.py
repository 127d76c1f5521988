import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def create_figure_and_axes(
    fig_aspect_ratio: float | str = "default",
) -> tuple[plt.Figure, plt.Axes]:
    """Creates figure and axes for plotting learning curves"""

    plt.style.use("seaborn-v0_8")
    fig = plt.figure(frameon=True, dpi=150)
    ax = fig.add_subplot(111)
    if fig_aspect_ratio != "default":
        ax.set_aspect(aspect=fig_aspect_ratio)
    return fig, ax


def save_and_clear_fig(fig: plt.Figure, ax: plt.Axes, file_name: str = "") -> None:
    """Save figure and clear for next iteration"""
    fig.savefig(
        file_name,
        bbox_inches="tight",
        pad_inches=0.05,
    )
    ax.cla()
    plt.close(fig)


def plot_learning_curves(records: list[dict], file_name: str) -> None:
    """Validation AUC per epoch, one line per stage."""
    fig, ax = create_figure_and_axes()
    stages: dict[str, list[tuple[int, float]]] = {}
    for record in records:
        if record.get("val_auc") is not None:
            stages.setdefault(record["stage"], []).append(
                (record["epoch"], record["val_auc"])
            )
    for stage, points in stages.items():
        epochs, aucs = zip(*points)
        ax.plot(epochs, aucs, marker="o", label=stage)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation AUC")
    if stages:
        ax.legend()
    save_and_clear_fig(fig, ax, file_name=file_name)
