class InvalidInputError(ValueError):
    pass


class ParseError(InvalidInputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleAssignmentError(RuntimeError):
    def __init__(self, traveller_id):
        self.traveller_id = traveller_id
        super().__init__(f"no private ride for traveller {traveller_id}")


class ImpossibleObservationWarning(RuntimeWarning):
    """Observed decision has zero probability under every class."""
