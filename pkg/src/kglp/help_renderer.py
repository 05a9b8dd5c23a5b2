"""Rich-powered --help renderer."""

import argparse

from .constants import COMMAND_ALIASES, COMMAND_DESCRIPTIONS, COMMAND_NAMES


def render_rich_help(console, parser: argparse.ArgumentParser) -> None:
    """Render a friendly top-level --help using rich panels and tables.

    This mirrors the argparse data but prints it with richer formatting.
    """
    from rich.markdown import Markdown
    from rich.panel import Panel
    from rich.table import Table
    from rich.text import Text

    usage = parser.format_usage()
    console.print(Panel(Text(usage, style="bold yellow"), title="Usage", border_style="yellow"))

    if parser.description:
        console.print(f"[bold magenta]Description:[/bold magenta] {parser.description}")

    options_table = Table(title="[bold magenta]Global Options[/bold magenta]", show_header=True, header_style="bold cyan")
    options_table.add_column("Flag", style="green", no_wrap=True)
    options_table.add_column("Description", style="white")
    for action in parser._actions:
        if getattr(action, "dest", None) == "help" or isinstance(action, argparse._SubParsersAction):
            continue
        flag_str = " ".join(action.option_strings) if action.option_strings else action.dest.upper()
        desc = action.help or ""
        if action.default not in (argparse.SUPPRESS, None) and not isinstance(action.default, bool):
            desc += f" [dim](default: {action.default})[/dim]"
        options_table.add_row(flag_str, desc)
    console.print(options_table)

    commands_table = Table(title="[bold magenta]Commands[/bold magenta]", show_header=True, header_style="bold cyan")
    commands_table.add_column("Command", style="cyan", no_wrap=True)
    commands_table.add_column("Aliases", style="dim", no_wrap=True)
    commands_table.add_column("Description", style="white")
    for name in COMMAND_NAMES:
        aliases = ", ".join(sorted(a for a, target in COMMAND_ALIASES.items() if target == name)) or "-"
        commands_table.add_row(name, aliases, COMMAND_DESCRIPTIONS.get(name, ""))
    console.print(commands_table)

    epilog_lines = [line.rstrip() for line in (parser.epilog or "").splitlines() if line.strip()]
    examples_content = "# Usage Examples\n"
    for line in epilog_lines:
        if line.lower().startswith("examples:"):
            continue
        if line.strip().startswith("kglp"):
            examples_content += f"- ```bash\n{line.strip()}\n```\n"
        else:
            examples_content += f"{line}\n"

    console.print(
        Panel(
            Markdown(examples_content),
            title="[bold green]Quick Starts[/bold green]",
            border_style="green",
            expand=False,
        )
    )
