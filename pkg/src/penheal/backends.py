"""Real command-execution backends.

The shell backend spawns a subprocess per command with merged output capture
and a hard timeout. Console-channel commands are fed to a metasploit console
binary one-shot (spawn, run, capture, exit); when the binary is absent the
command fails as an ordinary execution record, never a crash.
"""

from __future__ import annotations

import shutil
import subprocess
from typing import Union

from .engine import Command, CommandChannel, TIMEOUT_STATUS


class ShellBackend:
    """Runs commands on the local system. Use only against hosts you own."""

    def __init__(self, msfconsole_binary: str = "msfconsole"):
        self.msfconsole_binary = msfconsole_binary

    def run(self, command: Command) -> tuple[str, Union[int, str]]:
        if command.channel is CommandChannel.MSFCONSOLE:
            return self._run_msfconsole(command)
        return self._run_shell(command.raw, command.timeout_seconds)

    def _run_shell(self, text: str, timeout: int) -> tuple[str, Union[int, str]]:
        try:
            proc = subprocess.run(
                text,
                shell=True,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired as exc:
            partial = exc.output.decode("utf-8", "replace") if exc.output else ""
            return partial + f"\n[command timed out after {timeout}s]", TIMEOUT_STATUS
        return proc.stdout.decode("utf-8", "replace"), proc.returncode

    def _run_msfconsole(self, command: Command) -> tuple[str, Union[int, str]]:
        if shutil.which(self.msfconsole_binary) is None:
            return (
                f"execution error: {self.msfconsole_binary} not found on this system",
                -1,
            )
        # One-shot session: run the batch, then exit, so output capture is bounded.
        batch = command.raw.replace('"', '\\"')
        text = f'{self.msfconsole_binary} -q -x "{batch}; exit"'
        return self._run_shell(text, command.timeout_seconds)
