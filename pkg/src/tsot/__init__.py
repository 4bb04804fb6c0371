"""Token-level serialized output for multi-talker transcripts."""

__version__ = "0.1.0"

from .deserializer import (
    ChannelOutOfRange,
    Decoder,
    DecoderState,
    ModeMismatch,
    deserialize,
    new_decoder,
    step,
    strip_cc,
)
from .roundtrip import RoundTripReport, round_trip_check
from .scoring import (
    EditCounts,
    WerReport,
    edit_distance,
    macro_average,
    permutation_wer,
    score_deserialized,
)
from .serializer import (
    ChannelSelect,
    ChannelToggle,
    ConcurrencyExceeded,
    Lexical,
    SerializedTranscript,
    parse_token,
    serialize,
    serialize_m,
    serialize_two,
)
from .simulate import (
    MixtureConfig,
    MixtureSample,
    generate_dataset,
    sample_mixture,
    speed_perturb,
)
from .transcript import (
    AnnotatedTranscript,
    ConcurrencyProfile,
    TimedToken,
    TranscriptError,
    expand_subwords,
    import_ctm,
    max_concurrency,
    validate_transcript,
)
