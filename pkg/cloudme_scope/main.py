from cloudme_scope.cli.commands import cli


def main() -> None:
    cli(prog_name="cloudme-scope", obj={})


if __name__ == "__main__":
    main()
