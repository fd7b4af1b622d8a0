"""Error taxonomy shared across the package.

The command-line entry point maps these onto its exit codes, so raising the
right class matters: ValidationError for bad inputs or configuration,
DataError for anything filesystem or format shaped, NumericalError for
training that went off the rails.
"""


class InklineError(Exception):
    pass


class ValidationError(InklineError):
    pass


class DataError(InklineError):
    pass


class NumericalError(InklineError):
    pass
