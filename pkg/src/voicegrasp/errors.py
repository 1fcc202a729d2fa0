"""Exception hierarchy.

Every expected failure carries the pipeline stage it belongs to and the
process exit code the CLI maps it to.
"""


class VoiceGraspError(Exception):
    stage = "general"
    exit_code = 1


class ConfigError(VoiceGraspError):
    stage = "config"
    exit_code = 2


class ValidationError(ConfigError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class PerceptionError(VoiceGraspError):
    stage = "perception"
    exit_code = 3


class PlanningError(VoiceGraspError):
    stage = "planning"
    exit_code = 4


class IoError(VoiceGraspError):
    stage = "io"
    exit_code = 1


# scene-io
class EmptySelection(PerceptionError):
    pass


class ParseError(PerceptionError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class MissingField(ParseError):
    pass


# instruction handling
class ProviderUnavailable(PerceptionError):
    stage = "instruction"


class EmptyTranscript(PerceptionError):
    stage = "instruction"


class ClarificationNeeded(PerceptionError):
    stage = "instruction"

    def __init__(self, transcript, alignment=0.0):
        super().__init__(
            f"instruction {transcript.text!r} does not match the scene "
            f"(alignment {alignment:.3f}); please clarify"
        )
        self.transcript = transcript
        self.alignment = alignment


# object features
class EmptyMask(PerceptionError):
    pass


class NoValidDepth(PerceptionError):
    pass


class InsufficientSupport(PerceptionError):
    pass


class TooFewPoints(PerceptionError):
    pass


class ZeroDirection(PerceptionError):
    pass


# hand model / candidate generation / refinement
class NoIntersection(PlanningError):
    pass


class OutOfRange(PlanningError):
    pass


class JointLimit(PlanningError):
    pass


class NoContacts(PlanningError):
    pass


class NoCandidates(PlanningError):
    pass


class DegenerateHull(PlanningError):
    def __init__(self, affine_dim):
        super().__init__(f"wrench hull is degenerate (affine dimension {affine_dim})")
        self.affine_dim = affine_dim


class NoForceClosureCandidate(PlanningError):
    pass


class NoConvergence(PlanningError):
    def __init__(self, residual, joints=None):
        super().__init__(
            f"IK did not converge (position {residual[0]:.3g} m, orientation {residual[1]:.3g} rad)"
        )
        self.residual = residual
        self.joints = joints


class NoFeasibleGrasp(PlanningError):
    exit_code = 5
