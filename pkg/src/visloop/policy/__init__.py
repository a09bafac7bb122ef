"""Decision policies: action grammar, prompts, remote client and scripted policies."""

from .actions import Action, ParseFailure, parse_action
from .base import (AUDIT, Observation, PayloadAudit, PolicyRequest, RandomPolicy, ScriptedPolicy,
                   build_request)
from .chat import ChatPolicy
from .oracle import (CountingOracle, JigsawOracle, OracleComparator, PlacementOracle, QAOracle,
                     oracle_policy)
from .prompts import PromptBundle, build_prompts, legal_actions

__all__ = ["Action", "ParseFailure", "parse_action", "AUDIT", "Observation", "PayloadAudit", "PolicyRequest",
           "RandomPolicy", "ScriptedPolicy", "build_request", "ChatPolicy", "PromptBundle", "build_prompts",
           "legal_actions", "CountingOracle", "JigsawOracle", "OracleComparator",
           "PlacementOracle", "QAOracle", "oracle_policy"]
