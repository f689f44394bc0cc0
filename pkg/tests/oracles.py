"""Independent brute-force oracles used to cross-check the engine.

These deliberately re-derive results with a different algorithm than the
implementation under test and must stay decoupled from it.
"""

from __future__ import annotations

from difflens.ir import Assign, CallStmt, FunctionIR, If, Loop, Return, SanityCheck, Stmt


def brute_force_paths(ir: FunctionIR) -> set[tuple]:
    """All statement-id sequences, computed by sequence expansion instead of
    the engine's continuation-passing walk. If steps carry the branch taken."""

    def expand(block: tuple[Stmt, ...]) -> tuple[list[tuple], list[tuple]]:
        """Returns (finished, open) sequences for a block."""
        open_seqs: list[tuple] = [()]
        finished: list[tuple] = []
        for stmt in block:
            if not open_seqs:
                break
            if isinstance(stmt, (Assign, CallStmt, SanityCheck)):
                open_seqs = [seq + ((stmt.sid, None),) for seq in open_seqs]
            elif isinstance(stmt, Return):
                finished.extend(seq + ((stmt.sid, None),) for seq in open_seqs)
                open_seqs = []
            elif isinstance(stmt, If):
                t_done, t_open = expand(stmt.then)
                e_done, e_open = expand(stmt.orelse)
                new_open = []
                for seq in open_seqs:
                    taken = seq + ((stmt.sid, True),)
                    fallen = seq + ((stmt.sid, False),)
                    finished.extend(taken + d for d in t_done)
                    finished.extend(fallen + d for d in e_done)
                    new_open.extend(taken + o for o in t_open)
                    new_open.extend(fallen + o for o in e_open)
                open_seqs = new_open
            elif isinstance(stmt, Loop):
                b_done, b_open = expand(stmt.body)
                new_open = []
                for seq in open_seqs:
                    entered = seq + ((stmt.sid, None),)
                    finished.extend(entered + d for d in b_done)
                    new_open.extend(entered + o for o in b_open)
                open_seqs = new_open
            else:  # pragma: no cover
                raise TypeError(stmt)
        return finished, open_seqs

    finished, open_seqs = expand(ir.body)
    return set(finished) | set(open_seqs)


def replay_legal(ir: FunctionIR, steps: tuple) -> bool:
    """Check that a step sequence is one legal control-flow walk."""
    position = [(list(ir.body), 0)]
    for sid, taken in steps:
        while position and position[-1][1] >= len(position[-1][0]):
            position.pop()
        if not position:
            return False
        block, idx = position[-1]
        stmt = block[idx]
        if stmt.sid != sid:
            return False
        position[-1] = (block, idx + 1)
        if isinstance(stmt, If):
            position.append((list(stmt.then if taken else stmt.orelse), 0))
        elif isinstance(stmt, Loop):
            position.append((list(stmt.body), 0))
        elif isinstance(stmt, Return):
            return True  # path may legally end here
    while position and position[-1][1] >= len(position[-1][0]):
        position.pop()
    return not position
