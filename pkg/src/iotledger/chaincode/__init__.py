"""The built-in access-control contract and its record types."""

from .contract import AssetContract, check_uuid, derived_challenge
from .model import AccessPolicy, Asset, ChallengeRecord, DeviceRecord, Right, SensorType

__all__ = [
    "AccessPolicy", "Asset", "AssetContract", "ChallengeRecord", "DeviceRecord", "Right",
    "SensorType", "check_uuid", "derived_challenge",
]
