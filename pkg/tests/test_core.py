from random import Random

import pytest

from rawasim.core import (Block, Cid, Message, MessageType, ProviderRecord,
                          derive_cid, peer_name, validate_block, wire_size)


def test_cid_deterministic():
    block = Block(b"hello world")
    assert derive_cid(block) == derive_cid(Block(b"hello world"))


def test_cid_collision_free_over_random_blocks():
    # 10^5 random payloads must map to 10^5 distinct digests
    rng = Random(1234)
    seen = set()
    for _ in range(100_000):
        seen.add(derive_cid(Block(rng.randbytes(rng.randint(1, 64)) + rng.randbytes(8))))
    assert len(seen) == 100_000


def test_validate_round_trip():
    block = Block(b"payload")
    assert validate_block(derive_cid(block), block)


def test_validate_rejects_other_payload():
    cid = derive_cid(Block(b"payload"))
    assert not validate_block(cid, Block(b"payload!"))


def test_empty_block_rejected():
    with pytest.raises(ValueError):
        Block(b"")


def test_message_field_invariants():
    cid = derive_cid(Block(b"x"))
    with pytest.raises(ValueError):
        Message(MessageType.WANT_HAVE, cid, payload=Block(b"x"))
    with pytest.raises(ValueError):
        Message(MessageType.BLOCK, cid)
    with pytest.raises(ValueError):
        Message(MessageType.HAVE, cid, providers=(ProviderRecord(1),))
    with pytest.raises(ValueError):
        Message(MessageType.FORWARD_HAVE, cid)


def test_wire_size_table():
    cid = derive_cid(Block(b"x"))
    assert wire_size(Message(MessageType.WANT_HAVE, cid)) == 44
    assert wire_size(Message(MessageType.CANCEL, cid)) == 44
    providers = tuple(ProviderRecord(p) for p in (1, 2))
    assert wire_size(Message(MessageType.FORWARD_HAVE, cid, providers=providers)) == 120
    assert wire_size(Message(MessageType.BLOCK, cid, payload=Block(b"a" * 1025))) == 1069


def test_wire_size_monotone_in_payload():
    sizes = []
    for n in (1, 2, 17, 1024, 1025, 153_600):
        block = Block(b"b" * n)
        sizes.append(wire_size(Message(MessageType.BLOCK, derive_cid(block),
                                       payload=block)))
    assert sizes == sorted(sizes) and len(set(sizes)) == len(sizes)


def test_peer_rendering():
    assert peer_name(17) == "P17"
    assert len(Cid(b"\xab" * 32).short()) == 8
