from statedelta.orchestration.agent import METHODS, Agent, AgentError, AgentProfile, Response, agent_respond
from statedelta.orchestration.prompt import (
    AssembledPrompt,
    PromptError,
    PromptSegment,
    assemble_prompt,
    join_segments,
    segments_from_template,
    turn,
)
from statedelta.orchestration.protocols import (
    ProtocolConfig,
    has_action,
    has_boxed,
    ia_shards,
    render_documents,
    run_debate,
    run_ia,
    run_single,
    run_workflow,
)
from statedelta.orchestration.results import SETTINGS, TaskResult, Turn
from statedelta.orchestration.templates import TEMPLATE_DIR, Template, TemplateError, TurnSyntax, load_template

__all__ = [
    "METHODS",
    "SETTINGS",
    "TEMPLATE_DIR",
    "Agent",
    "AgentError",
    "AgentProfile",
    "AssembledPrompt",
    "PromptError",
    "PromptSegment",
    "ProtocolConfig",
    "Response",
    "TaskResult",
    "Template",
    "TemplateError",
    "Turn",
    "TurnSyntax",
    "agent_respond",
    "assemble_prompt",
    "has_action",
    "has_boxed",
    "ia_shards",
    "join_segments",
    "load_template",
    "render_documents",
    "run_debate",
    "run_ia",
    "run_single",
    "run_workflow",
    "segments_from_template",
    "turn",
]
