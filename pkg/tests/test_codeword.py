import pytest
from hypothesis import given, strategies as st

from delchan.codeword import Alphabet, Code, chunk, chunks, code_image, log_power, pad_to_power
from delchan.errors import BadMessage, NonDividing, OutOfRange


def test_chunk_examples():
    assert chunk("0011", 2, 1) == "00"
    assert chunk("0011", 2, 2) == "11"
    assert chunk("0101", 4, 1) == "0101"


def test_chunk_errors():
    with pytest.raises(NonDividing):
        chunk("0011", 3, 1)
    with pytest.raises(OutOfRange):
        chunk("0011", 2, 3)
    with pytest.raises(OutOfRange):
        chunk("0011", 2, 0)


@given(st.text("01", min_size=1, max_size=40), st.integers(1, 8))
def test_chunks_concatenate_back(z, nu):
    if len(z) % nu:
        with pytest.raises(NonDividing):
            chunks(z, nu)
    else:
        assert "".join(chunk(z, nu, i) for i in range(1, len(z) // nu + 1)) == z


def test_pad_examples():
    assert pad_to_power("101", 2) == "1010"
    assert pad_to_power("0011", 2) == "0011"
    assert pad_to_power("01", 4) == "0100"


@given(st.text("01", min_size=1, max_size=70), st.integers(2, 5))
def test_pad_idempotent_and_never_shorter(z, kappa):
    p = pad_to_power(z, kappa)
    assert p.startswith(z)
    assert pad_to_power(p, kappa) == p
    log_power(len(p), kappa)


def test_encode_examples():
    assert Code("repetition", 2, params={"factor": 3}).encode("01") == "000111"
    assert Code("identity", 2).encode("10") == "10"
    assert Code("hadamard", 2).encode("11") == "0110"


def test_hadamard_matches_inner_products():
    code = Code("hadamard", 4)
    for x in code.messages():
        z = code.encode(x)
        for y in range(16):
            ybits = format(y, "04b")
            ip = sum(int(a) * int(b) for a, b in zip(x, ybits)) % 2
            assert z[y] == str(ip)


def test_encode_rejects_bad_messages():
    with pytest.raises(BadMessage):
        Code("identity", 2).encode("012")
    with pytest.raises(BadMessage):
        Code("identity", 2).encode("0a")


def test_random_code_is_deterministic():
    a = Code("random", 5, params={"length": 32, "seed": 3})
    b = Code("random", 5, params={"length": 32, "seed": 3})
    assert a.image() == b.image()
    assert a.image() != Code("random", 5, params={"length": 32, "seed": 4}).image()


def test_code_json_roundtrip():
    code = Code("random", 3, Alphabet("abc"), {"length": 9, "seed": 1})
    again = Code.from_json(code.to_json())
    assert again == code
    assert again.image() == code.image()


def test_alphabet_invariants():
    with pytest.raises(ValueError):
        Alphabet("0")
    with pytest.raises(ValueError):
        Alphabet("00")
    with pytest.raises(ValueError):
        Alphabet("01", zero="2")
    assert Alphabet("ab").zero == "a"


def test_message_order_is_lexicographic():
    code = Code("identity", 3)
    assert [code.message(i) for i in range(8)] == list(code.messages())


def test_code_image_modes():
    assert code_image(["00", "11"])[1] == "explicit"
    assert code_image(Code("identity", 3))[1] == "exhaustive"
    words, mode = code_image(Code("identity", 14), samples=20)
    assert mode == "sampled" and len(words) == 20
