fn main() {
    std::process::exit(lidar_edge::cli::run(std::env::args_os()));
}
