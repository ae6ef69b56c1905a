from .flows import (
    SCENARIOS,
    compare_roaming,
    default_config,
    run_baseline_centralized,
    run_ipx_alteration,
    run_key_rotation_roaming,
    run_location_attestation,
    run_nf_authorization,
    run_roaming_access,
    run_scenario,
)
from .harness import LINK_CLASSES, Actor, ScenarioMessage, ScenarioReport, link_class
from .interconnect import (
    InterconnectVerdict,
    Patch,
    SignedInterconnectMessage,
    apply_patch,
    originate,
    validate_message,
)

__all__ = [
    "SCENARIOS",
    "LINK_CLASSES",
    "Actor",
    "InterconnectVerdict",
    "Patch",
    "ScenarioMessage",
    "ScenarioReport",
    "SignedInterconnectMessage",
    "apply_patch",
    "compare_roaming",
    "default_config",
    "link_class",
    "originate",
    "run_baseline_centralized",
    "run_ipx_alteration",
    "run_key_rotation_roaming",
    "run_location_attestation",
    "run_nf_authorization",
    "run_roaming_access",
    "run_scenario",
    "validate_message",
]
