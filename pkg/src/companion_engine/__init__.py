"""Engine for orchestrating narrative multi-companion chats over LLM backends."""

from .backend import (
    Backend,
    BackendError,
    BackendUnavailableError,
    InferenceResult,
    Job,
    JobAdminData,
    OpenAICompatibleBackend,
    ScriptedBackend,
    ScriptEntry,
)
from .companion import (
    ChatCompanion,
    CompanionRuntime,
    ReplyEnv,
    ReplyTrigger,
    UserProxy,
    evaluate_reply_trigger,
    generate_reply,
    sample_mood,
    unlocked_knowledge,
    unlocked_mottos,
)
from .config import (
    ActionDescription,
    CompanionConfig,
    CompanionKind,
    ConditionalLine,
    ConfigError,
    DeputyScope,
    ModelConfig,
    MoodSpec,
    PromptFormat,
    SituationPrompt,
    ValidationError,
    load_companion_configs,
    parse_companion_configs,
    validate_configs,
)
from .context import ChatMessage, ChatRecord, Context
from .deputy import (
    AnsweringDeputy,
    DeputyRuntime,
    InstructionDeputy,
    InsufficientInputError,
    needs_summary,
    select_scope,
    summarize_context,
)
from .moderator import ModerationPolicy, select_next_speakers
from .orchestrator import (
    ActionLockedError,
    ChatSession,
    ChatStore,
    Engine,
    EngineSettings,
    LogicalClock,
    UnknownActionError,
    UnknownCompanionError,
    UnknownSituationError,
    default_round_count,
    route_reply,
    transcript_lines,
)
from .prompter import (
    Decorator,
    PromptData,
    apply_chat_template,
    assemble_prompt,
    decorate,
)
from .world import Condition, ConditionTypeError, WorldState, evaluate_condition

__version__ = "0.1.0"
