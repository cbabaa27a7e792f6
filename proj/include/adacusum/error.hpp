#pragma once

#include <stdexcept>
#include <string>

namespace adacusum {

// Base of every error the library throws. The CLI maps the concrete type to an
// exit code, so keep the hierarchy flat.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class invalid_input_error : public error {
public:
    using error::error;
};

class domain_error : public error {
public:
    using error::error;
};

class degenerate_variance_error : public error {
public:
    using error::error;
};

class configuration_error : public error {
public:
    using error::error;
};

class missing_quantile_error : public error {
public:
    using error::error;
};

class io_error : public error {
public:
    io_error(const std::string& path, const std::string& what)
        : error(path + ": " + what), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace adacusum
