fn main() {
    std::process::exit(msem_vms::cli::run_from_env());
}
