#include "qdnet/executor.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace qdnet {

namespace {

std::vector<char*> to_argv(const std::vector<std::string>& argv) {
    std::vector<char*> out;
    out.reserve(argv.size() + 1);
    for (const auto& a : argv) out.push_back(const_cast<char*>(a.c_str()));
    out.push_back(nullptr);
    return out;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    out += "'";
    return out;
}

CommandResult run_local(const std::vector<std::string>& argv) {
    int pipefd[2];
    if (::pipe(pipefd) != 0) throw std::runtime_error("pipe() failed");

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDERR_FILENO);
    posix_spawn_file_actions_addclose(&actions, pipefd[0]);

    pid_t pid = -1;
    auto cargv = to_argv(argv);
    int rc = ::posix_spawnp(&pid, argv[0].c_str(), &actions, nullptr,
                            cargv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(pipefd[1]);
    if (rc != 0) {
        ::close(pipefd[0]);
        throw std::runtime_error("cannot spawn '" + argv[0] +
                                 "': " + std::strerror(rc));
    }
    std::string output;
    char buf[4096];
    ssize_t n;
    while ((n = ::read(pipefd[0], buf, sizeof(buf))) > 0)
        output.append(buf, static_cast<size_t>(n));
    ::close(pipefd[0]);
    int status = 0;
    ::waitpid(pid, &status, 0);
    CommandResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.output = std::move(output);
    return result;
}

}  // namespace

void RemoteExecutor::note(const std::string& stage, const HostDecl& host,
                          const std::string& action) {
    std::lock_guard lock(mutex_);
    actions_.push_back({stage, host.host_name, action});
}

std::vector<ActionRecord> RemoteExecutor::actions() const {
    std::lock_guard lock(mutex_);
    return actions_;
}

void RemoteExecutor::clear_actions() {
    std::lock_guard lock(mutex_);
    actions_.clear();
}

CommandResult LocalExecutor::run(const HostDecl&,
                                 const std::vector<std::string>& argv) {
    return run_local(argv);
}

int64_t LocalExecutor::spawn(const HostDecl&,
                             const std::vector<std::string>& argv,
                             const std::string& log_path) {
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    if (!log_path.empty()) {
        posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO,
                                         log_path.c_str(),
                                         O_WRONLY | O_CREAT | O_APPEND, 0644);
        posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO,
                                         STDERR_FILENO);
    }
    pid_t pid = -1;
    auto cargv = to_argv(argv);
    int rc = ::posix_spawnp(&pid, argv[0].c_str(), &actions, nullptr,
                            cargv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0)
        throw std::runtime_error("cannot spawn '" + argv[0] +
                                 "': " + std::strerror(rc));
    return pid;
}

bool LocalExecutor::alive(const HostDecl&, int64_t pid) {
    if (pid <= 0) return false;
    // Reap if it already exited, then probe.
    int status = 0;
    ::waitpid(static_cast<pid_t>(pid), &status, WNOHANG);
    return ::kill(static_cast<pid_t>(pid), 0) == 0;
}

void LocalExecutor::terminate(const HostDecl& host, int64_t pid) {
    if (pid <= 0) return;
    ::kill(static_cast<pid_t>(pid), SIGTERM);
    for (int i = 0; i < 100; ++i) {
        int status = 0;
        pid_t r = ::waitpid(static_cast<pid_t>(pid), &status, WNOHANG);
        if (r == static_cast<pid_t>(pid) || ::kill(static_cast<pid_t>(pid), 0) != 0)
            return;
        ::usleep(20000);
    }
    ::kill(static_cast<pid_t>(pid), SIGKILL);
    ::waitpid(static_cast<pid_t>(pid), nullptr, 0);
}

void LocalExecutor::copy_file(const HostDecl&, const std::string& src,
                              const std::string& dst) {
    std::ifstream in(src, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + src);
    std::ofstream out(dst, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + dst);
    out << in.rdbuf();
}

std::vector<std::string> SshExecutor::ssh_argv(const HostDecl& host) const {
    std::vector<std::string> argv = {"ssh", "-o", "BatchMode=yes", "-o",
                                     "ConnectTimeout=5"};
    if (!host.auth.empty()) {
        argv.push_back("-i");
        argv.push_back(host.auth);
    }
    std::string target = host.address;
    if (!host.user.empty()) target = host.user + "@" + target;
    argv.push_back(target);
    return argv;
}

CommandResult SshExecutor::run(const HostDecl& host,
                               const std::vector<std::string>& argv) {
    auto cmd = ssh_argv(host);
    std::ostringstream remote;
    for (size_t i = 0; i < argv.size(); ++i) {
        if (i) remote << ' ';
        remote << shell_quote(argv[i]);
    }
    cmd.push_back(remote.str());
    return run_local(cmd);
}

int64_t SshExecutor::spawn(const HostDecl& host,
                           const std::vector<std::string>& argv,
                           const std::string& log_path) {
    std::ostringstream remote;
    remote << "nohup";
    for (const auto& a : argv) remote << ' ' << shell_quote(a);
    remote << " >> " << shell_quote(log_path.empty() ? "/dev/null" : log_path)
           << " 2>&1 & echo $!";
    auto cmd = ssh_argv(host);
    cmd.push_back(remote.str());
    CommandResult res = run_local(cmd);
    if (res.exit_code != 0)
        throw std::runtime_error("ssh spawn on '" + host.host_name +
                                 "' failed: " + res.output);
    try {
        return std::stoll(res.output);
    } catch (...) {
        throw std::runtime_error("ssh spawn on '" + host.host_name +
                                 "' returned no pid: " + res.output);
    }
}

bool SshExecutor::alive(const HostDecl& host, int64_t pid) {
    CommandResult res = run(host, {"kill", "-0", std::to_string(pid)});
    return res.exit_code == 0;
}

void SshExecutor::terminate(const HostDecl& host, int64_t pid) {
    run(host, {"kill", std::to_string(pid)});
}

void SshExecutor::copy_file(const HostDecl& host, const std::string& src,
                            const std::string& dst) {
    std::vector<std::string> cmd = {"scp", "-o", "BatchMode=yes", "-o",
                                    "ConnectTimeout=5"};
    if (!host.auth.empty()) {
        cmd.push_back("-i");
        cmd.push_back(host.auth);
    }
    cmd.push_back(src);
    std::string target = host.address;
    if (!host.user.empty()) target = host.user + "@" + target;
    cmd.push_back(target + ":" + dst);
    CommandResult res = run_local(cmd);
    if (res.exit_code != 0)
        throw std::runtime_error("scp to '" + host.host_name +
                                 "' failed: " + res.output);
}

RemoteExecutor& DispatchingExecutor::pick(const HostDecl& host) {
    return host.connection == HostConnection::ssh
               ? static_cast<RemoteExecutor&>(ssh_)
               : static_cast<RemoteExecutor&>(local_);
}

CommandResult DispatchingExecutor::run(const HostDecl& host,
                                       const std::vector<std::string>& argv) {
    return pick(host).run(host, argv);
}

int64_t DispatchingExecutor::spawn(const HostDecl& host,
                                   const std::vector<std::string>& argv,
                                   const std::string& log_path) {
    return pick(host).spawn(host, argv, log_path);
}

bool DispatchingExecutor::alive(const HostDecl& host, int64_t pid) {
    return pick(host).alive(host, pid);
}

void DispatchingExecutor::terminate(const HostDecl& host, int64_t pid) {
    pick(host).terminate(host, pid);
}

void DispatchingExecutor::copy_file(const HostDecl& host,
                                    const std::string& src,
                                    const std::string& dst) {
    pick(host).copy_file(host, src, dst);
}

}  // namespace qdnet
