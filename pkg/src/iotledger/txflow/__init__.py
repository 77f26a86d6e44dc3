"""Execute-order-validate: endorsement, policies, solo ordering, validation."""

from .gateway import CommitResult, EndorsementMismatch, Gateway, Timeout
from .orderer import OrdererConfig, OrdererUnavailable, SoloOrderer
from .peer import AuthFailure, CommitNotifier, Peer, UnknownChaincode
from .policy import And, MixedReadWriteSets, Or, Org, OutOf, check_policy, parse_policy
from .proposal import Proposal
from .simulate import ChaincodeError, TxStub
from .validation import validate_block

__all__ = [
    "And", "AuthFailure", "ChaincodeError", "CommitNotifier", "CommitResult",
    "EndorsementMismatch", "Gateway", "MixedReadWriteSets", "Or", "OrdererConfig",
    "OrdererUnavailable", "Org", "OutOf", "Peer", "Proposal", "SoloOrderer", "Timeout",
    "TxStub", "UnknownChaincode", "check_policy", "parse_policy", "validate_block",
]
