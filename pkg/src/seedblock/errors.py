"""Exception hierarchy shared by every layer.

Each error carries a stable ``code`` (used on the wire, in harness reports and
in the scenario corpus) and the CLI ``exit_code`` it maps to.
"""

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTEGRITY = 2
EXIT_CONNECTIVITY = 3


class SBAError(Exception):
    code = "error"
    exit_code = EXIT_USER
    status = 400

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class InvalidArgument(SBAError, ValueError):
    code = "invalid-argument"


class MalformedRequest(SBAError):
    code = "malformed-request"


class AlreadyRegistered(SBAError):
    code = "already-registered"
    status = 409


class AlreadyIssued(SBAError):
    code = "already-issued"
    status = 409


class AlreadyExists(SBAError):
    code = "already-exists"
    status = 409


class NotFound(SBAError, KeyError):
    code = "not-found"
    status = 404

    def __str__(self):
        return self.message


class Unauthorized(SBAError):
    code = "unauthorized"
    status = 401


class ScenarioInvalid(SBAError):
    code = "scenario-invalid"


class IntegrityError(SBAError):
    """Base for every failure that means stored or transmitted bytes are bad."""

    code = "integrity"
    exit_code = EXIT_INTEGRITY
    status = 422


class CorruptionDetected(IntegrityError):
    code = "corruption-detected"


class CorruptedBackup(IntegrityError):
    code = "corrupted-backup"


class SeedMissing(IntegrityError):
    code = "seed-missing"


class IntegrityFailure(IntegrityError):
    code = "integrity-failure"


class ProviderAuthenticityFailure(IntegrityError):
    code = "provider-authenticity-failure"


class LedgerCorrupt(IntegrityError):
    code = "ledger-corrupt"


class Unavailable(SBAError):
    """A store (or the service itself) cannot be reached."""

    code = "unavailable"
    exit_code = EXIT_CONNECTIVITY
    status = 503


class StartupFailure(Unavailable):
    code = "startup-failure"


# Not an exception: the status attached to a write whose remote replica failed.
DEGRADED_BACKUP = "degraded-backup"

_ALL = (
    InvalidArgument, MalformedRequest, AlreadyRegistered, AlreadyIssued,
    AlreadyExists, NotFound, Unauthorized, ScenarioInvalid, CorruptionDetected,
    CorruptedBackup, SeedMissing, IntegrityFailure, ProviderAuthenticityFailure,
    LedgerCorrupt, Unavailable, StartupFailure,
)
BY_CODE = {cls.code: cls for cls in _ALL}

# Error paths the operation contracts declare; the scenario corpus must hit each.
DECLARED_ERROR_CODES = frozenset({
    "invalid-argument", "already-registered", "already-issued", "already-exists",
    "not-found", "unauthorized", "corruption-detected", "corrupted-backup",
    "seed-missing", "integrity-failure", "provider-authenticity-failure",
    "unavailable", "startup-failure", "malformed-request", "scenario-invalid",
    DEGRADED_BACKUP,
})


def from_code(code: str, message: str = "") -> SBAError:
    return BY_CODE.get(code, SBAError)(message)
