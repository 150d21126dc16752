jcond {
   	loadCheck: sys.type == "fog" && load < 50;
   	cloudRun: sys.type == "cloud";
}
jdata {
   	int load as logger;
}
jasync function {loadCheck||cloudRun} loadBalanced {
   	// Code to execute
}
