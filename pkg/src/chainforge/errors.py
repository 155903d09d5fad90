"""Exception taxonomy shared by all pipeline stages."""


class ForgeError(Exception):
    """Base class for all chainforge errors."""

    exit_code = 1


# --- wire / block-file decoding -------------------------------------------

class TruncatedInput(ForgeError):
    """Byte slice ended before the encoding it starts was complete."""

    exit_code = 4


class MalformedTransaction(ForgeError):
    """Transaction bytes violate the wire format (bad flag, zero inputs)."""

    exit_code = 4


class MalformedBlockFile(ForgeError):
    """Block file framing is broken (bad magic where a record should start)."""

    exit_code = 4


class MissingGenesis(ForgeError):
    """No block with an all-zero previous hash was found."""

    exit_code = 4


class BrokenChain(ForgeError):
    """No stored block extends some height below the requested limit."""

    exit_code = 4


class InvalidAddress(ForgeError):
    """Address string failed checksum or charset validation."""

    exit_code = 4


# --- graph construction ----------------------------------------------------

class UnresolvedInput(ForgeError):
    """Transaction input references a funding output we never saw."""

    exit_code = 5


class AliasAbsent(ForgeError):
    """Alias appears neither in the inputs nor the outputs of the transaction."""

    exit_code = 5


class InconsistentInputs(ForgeError):
    """Edge table and event stream disagree (edge without supporting events)."""

    exit_code = 5


# --- labels ----------------------------------------------------------------

class UnknownCategory(ForgeError):
    """Label row carries a category outside the closed set."""

    exit_code = 5


class MalformedRow(ForgeError):
    """Label CSV row cannot be parsed."""

    exit_code = 5


# --- features --------------------------------------------------------------

class NoActivity(ForgeError):
    """Node has no transfers at all; age is undefined."""

    exit_code = 5


class MissingRates(ForgeError):
    """Rates table does not cover the node's activity dates."""

    exit_code = 5


class EmptyTrainingSplit(ForgeError):
    """Cannot fit normalization constants on an empty split."""

    exit_code = 5


class ManifestMismatch(ForgeError):
    """Feature vector and normalization constants come from different manifests."""

    exit_code = 5


# --- store -----------------------------------------------------------------

class SchemaMismatch(ForgeError):
    """CSV header does not match the expected column list exactly."""

    exit_code = 6


class DuplicateEdgeKey(ForgeError):
    """Two edge rows share the same (a, b) key."""

    exit_code = 6


class UnknownAlias(ForgeError):
    """Alias not present in the store."""

    exit_code = 6


class IoFailure(ForgeError):
    """Filesystem-level failure while writing export files."""

    exit_code = 6


# --- pipeline --------------------------------------------------------------

class UpstreamIncomplete(ForgeError):
    """A stage was requested before its upstream products exist."""

    exit_code = 3


class ConfigInvalid(ForgeError):
    """Configuration file is missing, unreadable, or inconsistent."""

    exit_code = 2
