"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments violating its contract."""


class MissingClassError(ContractError):
    """A class id expected in a batch or dataset has no members."""

    def __init__(self, class_id, context=""):
        self.class_id = int(class_id)
        msg = f"class {self.class_id} has no members"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class TripletInfeasibleError(ContractError):
    """No valid (anchor, positive, negative) triplet exists for the labels."""


class DataError(ValueError):
    """A data file is missing, malformed, or carries non-finite values."""
