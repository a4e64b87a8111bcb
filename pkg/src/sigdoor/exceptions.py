"""Exception hierarchy. Every error raised by the package derives from SigdoorError."""


class SigdoorError(Exception):
    pass


class UnsupportedFormat(SigdoorError, ValueError):
    pass


class BoxOutOfBounds(SigdoorError, ValueError):
    pass


class CapacityExceeded(SigdoorError, ValueError):
    pass


class UnsupportedScheme(SigdoorError, ValueError):
    pass


class MalformedKey(SigdoorError, ValueError):
    pass


class SchemeMismatch(SigdoorError, ValueError):
    pass


class ZeroClasses(SigdoorError, ValueError):
    pass


class SingleClass(SigdoorError, ValueError):
    pass


class LabelOutOfRange(SigdoorError, ValueError):
    pass


class EmptyDataset(SigdoorError, ValueError):
    pass


class DuplicateImage(SigdoorError, ValueError):
    pass


class EmptyTriggerSet(SigdoorError, ValueError):
    pass


class SignatureCountMismatch(SigdoorError, ValueError):
    pass


class DuplicateUser(SigdoorError, ValueError):
    pass


class TooFewUsers(SigdoorError, ValueError):
    pass


class AmbiguousAttribution(SigdoorError):
    pass


class UnsupportedConfig(SigdoorError, ValueError):
    pass
