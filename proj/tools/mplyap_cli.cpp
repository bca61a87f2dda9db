#include <iostream>

#include "cli_options.hpp"

int main(int argc, char** argv) {
    mplyap::RunSpec spec;
    try {
        spec = mplyap::cli::parse(argc, argv);
    } catch (const mplyap::cli::Exit& e) {
        return e.code;
    } catch (const mplyap::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return mplyap::run(spec);
}
