"""Error type shared by every module.

Each failure carries a stable string ``code`` so the CLI can map it to an
exit status and a machine readable error object.
"""


class ThetabarError(Exception):
    def __init__(self, code, message=""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message

    def as_dict(self):
        return {"code": self.code, "message": self.message}
