from .figures import bracket_figure, decay_figure, residual_figure

__all__ = ["decay_figure", "bracket_figure", "residual_figure"]
