"""erika-bridge command line.

``run`` starts the gateway (and its web UI endpoint); ``stats`` summarizes a
transcript file or a running service; ``transcode`` is a codec debugging tool
reading stdin and writing stdout.
"""

from __future__ import annotations

import json
import logging
import sys

import click

from .archive import TranscriptStore
from .codec import encode_text, load_codepage
from .gateway import Bridge, ConfigError, load_config
from .service import create_app, render_events


@click.group()
def main() -> None:
    """Talk to an LLM through a legacy typewriter (or its simulator)."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Key-value config file; CLI flags win over it.")
@click.option("--transport", help="sim or serial:<device>")
@click.option("--backend", type=click.Choice(["mock", "openai"]), help="LLM backend.")
@click.option("--codepage", type=click.Path(exists=True, dir_okay=False),
              help="Codepage table (.cpt).")
@click.option("--listen", help="UI endpoint address, host:port.")
@click.option("--width", type=int, help="Carriage width in columns.")
@click.option("--cps", type=float, help="Print pacing, characters per second.")
@click.option("--transcript", type=click.Path(dir_okay=False), help="Transcript JSONL path.")
@click.option("--verbose", is_flag=True, help="Debug logging.")
def run(config_path, transport, backend, codepage, listen, width, cps, transcript, verbose):
    """Run the gateway until interrupted."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        "transport": transport,
        "backend": backend,
        "codepage": codepage,
        "listen": listen,
        "width": width,
        "cps": cps,
        "transcript": transcript,
    }
    try:
        cfg = load_config(config_path, overrides)
        bridge = Bridge(cfg)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from None
    app = create_app(bridge)
    host, port = cfg.listen_address()
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--transcript", type=click.Path(dir_okay=False), help="Transcript JSONL path.")
@click.option("--url", help="Base URL of a running gateway (queries its /stats).")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def stats(transcript, url, as_json):
    """Per-category counts, totals and mean latency for a transcript."""
    if bool(transcript) == bool(url):
        raise click.UsageError("give exactly one of --transcript or --url")
    if url:
        import httpx

        try:
            response = httpx.get(url.rstrip("/") + "/stats", timeout=10.0)
            response.raise_for_status()
            payload = response.json()
        except httpx.HTTPError as exc:
            raise click.ClickException(f"cannot query {url}: {exc}") from None
    else:
        payload = TranscriptStore(transcript).stats().to_payload()
    if as_json:
        click.echo(json.dumps(payload, ensure_ascii=False))
        return
    click.echo(f"total:        {payload['total']}")
    click.echo(f"malformed:    {payload['malformed']}")
    click.echo(f"mean latency: {payload['mean_latency_ms']} ms")
    for name, count in payload["categories"].items():
        click.echo(f"  {name:<15} {count}")


@main.command()
@click.option("--codepage", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--encode", "direction", flag_value="encode")
@click.option("--decode", "direction", flag_value="decode")
def transcode(codepage, direction):
    """Encode stdin text to hex bytes, or decode hex bytes back to text."""
    if direction is None:
        raise click.UsageError("give --encode or --decode")
    cp = load_codepage(codepage)
    source = sys.stdin.read()
    if direction == "encode":
        result = encode_text(cp, source)
        click.echo(" ".join(f"{b:02X}" for b in result.data))
        for sub in result.substitutions:
            click.echo(
                f"substituted U+{ord(sub.char):04X} at position {sub.position}",
                err=True,
            )
        return
    try:
        data = [int(token, 16) for token in source.split()]
    except ValueError as exc:
        raise click.ClickException(f"bad hex input: {exc}") from None
    if any(not 0 <= b <= 255 for b in data):
        raise click.ClickException("bytes must be 00..FF")
    click.echo(render_events(cp, data))


if __name__ == "__main__":
    main()
