"""Client for the task service.

By default requests run in-process against the ASGI app (no socket, no
server); pointing base_url at a remote instance sends the same payloads over
HTTP. Either way the caller sees response models as dicts and domain errors
as the original exception types, re-raised from the service's typed 422
payload.
"""

from __future__ import annotations

import asyncio

import httpx

from . import errors
from .service import create_app

_ERROR_TYPES = {
    name: obj
    for name, obj in vars(errors).items()
    if isinstance(obj, type) and issubclass(obj, errors.PlanartrapError)
}


class ServiceClient:
    """POSTs task requests, in-process by default."""

    def __init__(self, base_url: str | None = None, timeout: float = 600.0):
        self.base_url = base_url
        self.timeout = timeout
        self._app = None if base_url else create_app()

    def _request(self, method: str, path: str, payload=None) -> httpx.Response:
        if self._app is not None:
            transport = httpx.ASGITransport(app=self._app)

            async def go():
                async with httpx.AsyncClient(
                    transport=transport,
                    base_url="http://planartrap.local",
                    timeout=self.timeout,
                ) as client:
                    return await client.request(method, path, json=payload)

            return asyncio.run(go())
        with httpx.Client(base_url=self.base_url, timeout=self.timeout) as client:
            return client.request(method, path, json=payload)

    def _run(self, command: str, payload: dict) -> dict:
        response = self._request("POST", f"/run/{command}", payload)
        if response.status_code == 422:
            body = response.json()
            detail = body.get("detail", body)
            if isinstance(detail, dict) and "error" in detail:
                exc_type = _ERROR_TYPES.get(detail["error"], errors.InputError)
                if exc_type is errors.UnstableAxis:
                    raise errors.InputError(detail["detail"])
                raise exc_type(detail["detail"])
            # pydantic validation errors arrive as a list
            raise errors.InputError(str(detail))
        response.raise_for_status()
        return response.json()

    def health(self) -> dict:
        response = self._request("GET", "/health")
        response.raise_for_status()
        return response.json()

    def version(self) -> dict:
        response = self._request("GET", "/version")
        response.raise_for_status()
        return response.json()

    def freqs(self, payload: dict) -> dict:
        return self._run("freqs", payload)

    def equilibrium(self, payload: dict) -> dict:
        return self._run("equilibrium", payload)

    def modes(self, payload: dict) -> dict:
        return self._run("modes", payload)

    def scan(self, payload: dict) -> dict:
        return self._run("scan", payload)

    def calibrate(self, payload: dict) -> dict:
        return self._run("calibrate", payload)

    def spectrum(self, payload: dict) -> dict:
        return self._run("spectrum", payload)

    def micromotion(self, payload: dict) -> dict:
        return self._run("micromotion", payload)
