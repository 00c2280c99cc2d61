"""Exception hierarchy.

Three categories, mapped to CLI exit codes: input problems (1), numeric or
estimation failures (2), infeasible design targets (3).
"""


class SurroptError(Exception):
    exit_code = 2


class InputError(SurroptError):
    exit_code = 1


class NumericError(SurroptError):
    exit_code = 2


class InfeasibleError(SurroptError):
    exit_code = 3


# --- data loading / validation ------------------------------------------------

class MissingColumn(InputError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"required column {name!r} not found in input")


class NonBinaryArm(InputError):
    def __init__(self, row, value):
        self.row = row
        self.value = value
        super().__init__(f"row {row}: arm indicator must be 0 or 1, got {value!r}")


class NonFiniteValue(InputError):
    def __init__(self, row, field):
        self.row = row
        self.field = field
        super().__init__(f"row {row}: field {field!r} is missing or not finite")


class ArmTooSmall(InputError):
    def __init__(self, arm, count):
        self.arm = arm
        self.count = count
        super().__init__(f"arm {arm} has {count} subjects; at least 2 required")


class InvalidParameters(InputError):
    pass


# --- kernel smoothing ----------------------------------------------------------

class DegenerateSample(NumericError):
    pass


class EmptyNeighborhood(NumericError):
    def __init__(self, s):
        self.s = s
        super().__init__(f"no effective sample mass near s={s!r}; cannot regress")


# --- support partition / transform ---------------------------------------------

class NoOverlap(NumericError):
    pass


class TwoSidedD0(NumericError):
    pass


class DegenerateK2(NumericError):
    pass


class OutOfSupport(NumericError):
    def __init__(self, s):
        self.s = s
        super().__init__(f"point(s) outside the estimated surrogate support: {s!r}")


class SingularSystem(NumericError):
    pass


# --- effects -------------------------------------------------------------------

class TooManyExcluded(NumericError):
    def __init__(self, excluded, total, cap):
        self.excluded = excluded
        self.total = total
        self.cap = cap
        super().__init__(
            f"{excluded}/{total} subjects outside transform support "
            f"(cap {cap:.1%})"
        )


class NullPrimaryEffect(NumericError):
    pass


# --- resampling ----------------------------------------------------------------

class EstimatorFailure(NumericError):
    def __init__(self, n_failed, total):
        self.n_failed = n_failed
        self.total = total
        super().__init__(f"{n_failed}/{total} perturbation replicates failed")


class FoldTooSmall(NumericError):
    def __init__(self, fold, arm, count, minimum):
        self.fold = fold
        self.arm = arm
        self.count = count
        super().__init__(
            f"fold {fold} has {count} arm-{arm} subjects; minimum {minimum}"
        )


# --- power / design ------------------------------------------------------------

class InfeasibleTarget(InfeasibleError):
    pass


class NonpositiveSurrogateEffect(InfeasibleError):
    pass


class NoFeasibleN(InfeasibleError):
    pass
