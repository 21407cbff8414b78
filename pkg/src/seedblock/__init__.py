"""Seed-block remote backup with token-authenticated envelopes."""

from .codec import (SEED_LEN, EncodedFile, SeedBlock, derive_client_id,
                    make_seed_block, xor_decode, xor_encode)
from ._kernel import BACKEND
from .envelope import Ciphertext, decrypt_message, encrypt_message
from .identity import Admin, ClientRecord, Role, Token
from .service import BackupPolicy, BackupService

__version__ = "0.1.0"

__all__ = [
    "SEED_LEN", "EncodedFile", "SeedBlock", "derive_client_id", "make_seed_block",
    "xor_encode", "xor_decode", "BACKEND", "Ciphertext", "encrypt_message",
    "decrypt_message", "Admin", "ClientRecord", "Role", "Token", "BackupPolicy",
    "BackupService",
]
