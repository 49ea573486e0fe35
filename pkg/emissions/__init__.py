from emissions.opmode import (
    OpModeBin,
    OpModeTable,
    OpModeTableError,
    check_partition,
    cruise_rates,
    default_opmode_table,
    emission_rates,
    load_opmode_table,
    save_opmode_table,
    vsp,
)
