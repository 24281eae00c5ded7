#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "parnn/pipeline.hpp"
#include "parnn/train.hpp"
#include "parnn/uq.hpp"

namespace {

int dispatch(void (*command)(const parnn::CommandOptions&), const parnn::CommandOptions& opts) {
    try {
        command(opts);
        return 0;
    } catch (const parnn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const parnn::DivergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const parnn::SingularHessianError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse Bayesian RNN/MLP forecasting: annealed training, structure "
                 "selection, and calibrated prediction intervals"};
    app.require_subcommand(1);

    parnn::CommandOptions opts;
    app.add_flag("--verbose", opts.verbose, "Progress messages on standard error");

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "JSON config file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out_dir, "Output directory (overrides config out_dir)");
    };

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
    add_common(simulate);
    auto* train = app.add_subcommand("train", "Train, sparsify, and refine one model");
    add_common(train);
    auto* select = app.add_subcommand("select-order", "Replicated lag-selection experiment");
    add_common(select);
    auto* uq = app.add_subcommand("uq", "Prediction intervals from a trained checkpoint");
    add_common(uq);
    uq->add_option("--baseline", opts.baseline, "Additional baseline report (conformal)")
        ->check(CLI::IsMember({"conformal"}));

    CLI11_PARSE(app, argc, argv);

    if (simulate->parsed()) return dispatch(parnn::cmd_simulate, opts);
    if (train->parsed()) return dispatch(parnn::cmd_train, opts);
    if (select->parsed()) return dispatch(parnn::cmd_select_order, opts);
    return dispatch(parnn::cmd_uq, opts);
}
