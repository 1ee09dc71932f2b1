"""Errors raised by the export helper."""


class ExportError(Exception):
    """Any failure while exporting feature grids or probability maps."""


class WeightLoadError(ExportError):
    """Backbone weights could not be obtained (download or file load)."""
